//! Subcommand implementations: capacity/bound sweeps, AE training runs,
//! crosstalk and fixed-channel studies.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use fmflab::ae::{self, train, DetectorKind, PrecoderKind, TrainConfig, TrainOutput};
use fmflab::baa::{self, BaaParams, QuadratureScheme};
use fmflab::bounds::{optimize_allocation_grid, PowerAllocation};
use fmflab::channel::{draw_ensemble, LinkConfig};

use crate::config::{ExperimentConfig, Profile};
use crate::csvio::{cell, CsvSink};

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub profile: Profile,
    pub seed: u64,
    pub out_dir: &'a Path,
}

impl RunContext<'_> {
    fn hash(&self) -> String {
        self.cfg.hash()
    }

    fn baa_params(&self, m: usize, seed: u64) -> anyhow::Result<BaaParams<f64>> {
        if self.profile == Profile::Desk && m > self.cfg.baa.desk_max_m {
            bail!(
                "M = {m} exceeds the desk-profile cap of {}; rerun with --profile full",
                self.cfg.baa.desk_max_m
            );
        }
        let mut p = BaaParams::new(m, seed);
        p.tol_bits = self.cfg.baa.tol_bits;
        p.max_iter = self.cfg.baa.max_iter;
        p.quad = QuadratureScheme::gauss_hermite(self.cfg.baa.quad_nodes)
            .map_err(anyhow::Error::new)?;
        p.n_iter_draws = self.cfg.baa.n_iter_draws;
        p.n_eval_draws = self.cfg.baa.n_eval_draws;
        Ok(p)
    }

    fn train_config(
        &self,
        precoder: PrecoderKind,
        detector: DetectorKind,
        seed: u64,
    ) -> TrainConfig {
        let mut tc = TrainConfig::new(precoder, detector, seed);
        tc.batch_size = self.cfg.train.batch_size;
        tc.n_train_symbols = self.cfg.train_symbols(self.profile);
        tc.n_test_symbols = self.cfg.train.n_test_symbols;
        tc.learning_rate = self.cfg.train.learning_rate;
        tc
    }
}

/// `bounds`: ergodic upper bounds over the SNR sweep (independent of M).
pub fn run_bounds(ctx: &RunContext) -> anyhow::Result<()> {
    let path = ctx.out_dir.join("bounds.csv");
    let mut sink = CsvSink::open(
        &path,
        "bounds-v1",
        "snr_db,p1_dbm,ub1,ub2,min_ub",
        &ctx.hash(),
        ctx.seed,
    )?;
    let link = ctx.cfg.link_config(ctx.cfg.link.mod_order, ctx.cfg.link.snr_db);
    let h = draw_ensemble(&link, ctx.cfg.baa.n_eval_draws, ctx.seed);
    for &snr in &ctx.cfg.sweep.snr_db {
        let t0 = Instant::now();
        let sigma = fmflab::channel::snr_to_sigma(snr, link.p_tot_dbm, link.n_modes);
        let report =
            match optimize_allocation_grid(&h, sigma, ctx.cfg.baa.grid_step_db, link.p_tot_mw()) {
                Ok(r) => r,
                Err(e) => {
                    sink.row(&format!("# failed snr_db={snr}: {e}"))?;
                    eprintln!("bounds snr={snr}: FAILED ({e})");
                    continue;
                }
            };
        sink.row(&format!(
            "{},{},{},{},{}",
            cell(snr),
            cell(report.best_alloc.dbm()[0]),
            cell(report.ub1_bits),
            cell(report.ub2_bits),
            cell(report.min_ub_bits),
        ))?;
        eprintln!(
            "bounds snr={snr}: min_ub={:.4} ({} skipped, {:.2}s)",
            report.min_ub_bits,
            report.n_skipped,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// `baa`: constrained capacity estimates over (M, SNR), with the uniform
/// (equidistant-PAM) baseline; optional power search and distribution
/// snapshots.
pub fn run_baa(ctx: &RunContext, power_search: bool, snapshots: bool) -> anyhow::Result<()> {
    let path = ctx.out_dir.join("baa.csv");
    let mut sink = CsvSink::open(
        &path,
        "baa-v1",
        "m,snr_db,p1_dbm,p2_dbm,mi_bits,uniform_mi_bits,iterations,converged",
        &ctx.hash(),
        ctx.seed,
    )?;
    for &m in &ctx.cfg.sweep.m_list {
        let params = ctx.baa_params(m, ctx.seed)?;
        for &snr in &ctx.cfg.sweep.snr_db {
            let t0 = Instant::now();
            let link = ctx.cfg.link_config(m, snr);
            let outcome = if power_search {
                baa::baa_power_search(&link, ctx.cfg.baa.grid_step_db, &params)
            } else {
                let alloc = PowerAllocation::equal_split(link.p_tot_mw(), link.n_modes);
                baa::baa_capacity(&link, &alloc, &params)
            };
            let result = match outcome {
                Ok(r) => r,
                Err(e) => {
                    sink.row(&format!("# failed m={m} snr_db={snr}: {e}"))?;
                    eprintln!("baa m={m} snr={snr}: FAILED ({e})");
                    continue;
                }
            };
            let uniform = baa::uniform_mi(&link, &result.alloc, &params)
                .map_err(anyhow::Error::new)?;
            let dbm = result.alloc.dbm();
            sink.row(&format!(
                "{},{},{},{},{},{},{},{}",
                m,
                cell(snr),
                cell(dbm[0]),
                cell(*dbm.get(1).unwrap_or(&f64::NAN)),
                cell(result.reported_mi_bits),
                cell(uniform),
                result.mi_trace.len() - 1,
                result.converged,
            ))?;
            if snapshots {
                let stem = format!("m{m}_snr{snr:.2}");
                let dist_path = ctx.out_dir.join(format!("baa_dist_{stem}.csv"));
                let trace_path = ctx.out_dir.join(format!("baa_trace_{stem}.csv"));
                let mut f = std::fs::File::create(&dist_path)
                    .with_context(|| dist_path.display().to_string())?;
                baa::write_distribution_csv(&result.distribution, &mut f)?;
                let mut f = std::fs::File::create(&trace_path)
                    .with_context(|| trace_path.display().to_string())?;
                baa::write_mi_trace_csv(&result.mi_trace, &mut f)?;
            }
            eprintln!(
                "baa m={m} snr={snr}: mi={:.4} uniform={:.4} iters={} ({:.2}s)",
                result.reported_mi_bits,
                uniform,
                result.mi_trace.len() - 1,
                t0.elapsed().as_secs_f64()
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn parse_method(s: &str) -> anyhow::Result<(PrecoderKind, DetectorKind)> {
    let (p, d) = s
        .split_once('/')
        .ok_or_else(|| anyhow::anyhow!("method `{s}` is not precoder/detector"))?;
    let precoder = match p {
        "prec1" => PrecoderKind::Prec1,
        "prec1lin" => PrecoderKind::Prec1Lin,
        "prec2" => PrecoderKind::Prec2,
        "prec3" => PrecoderKind::Prec3,
        other => bail!("unknown precoder `{other}`"),
    };
    let detector = match d {
        "det1" => DetectorKind::Det1,
        "det2" => DetectorKind::Det2,
        "gaussian" => DetectorKind::GaussianAux,
        other => bail!("unknown detector `{other}`"),
    };
    Ok((precoder, detector))
}

fn method_label(precoder: PrecoderKind, detector: DetectorKind) -> String {
    format!("{}/{}", precoder.label(), detector.label())
}

fn train_and_rate(
    link: &LinkConfig<f64>,
    tc: &TrainConfig,
) -> anyhow::Result<(TrainOutput<f64>, f64)> {
    let out = train(link, tc).map_err(anyhow::Error::new)?;
    let rate = out.report.reported_rate;
    Ok((out, rate))
}

/// `ae-train`: one training run at the configured link; writes the rate
/// row and a checkpoint.
pub fn run_ae_train(
    ctx: &RunContext,
    precoder: PrecoderKind,
    detector: DetectorKind,
) -> anyhow::Result<()> {
    let path = ctx.out_dir.join("rates.csv");
    let mut sink = CsvSink::open(
        &path,
        "rates-v1",
        "method,m,snr_db,xt2_db,p1_dbm,p2_dbm,rate_bits,seed",
        &ctx.hash(),
        ctx.seed,
    )?;
    let m = ctx.cfg.link.mod_order;
    let link = ctx.cfg.link_config(m, ctx.cfg.link.snr_db);
    let tc = ctx.train_config(precoder, detector, ctx.seed);
    let t0 = Instant::now();
    let (out, rate) = train_and_rate(&link, &tc)?;
    let report = &out.report;
    sink.row(&format!(
        "{},{},{},{},{},{},{},{}",
        method_label(precoder, detector),
        m,
        cell(link.snr_db),
        cell(ctx.cfg.components.demux.mean_xt_db[1]),
        cell(report.power_dbm[0]),
        cell(report.power_dbm[1]),
        cell(rate),
        ctx.seed,
    ))?;
    let ckpt = ctx.out_dir.join(format!(
        "ae_{}_{}_m{}_seed{}.ckpt",
        precoder.label(),
        detector.label(),
        m,
        ctx.seed
    ));
    let mut f = std::fs::File::create(&ckpt).with_context(|| ckpt.display().to_string())?;
    ae::write_checkpoint(&out.system, &mut f)?;
    eprintln!(
        "ae-train {}: rate={rate:.4} bits ({:.1}s)",
        method_label(precoder, detector),
        t0.elapsed().as_secs_f64()
    );
    println!("wrote {} and {}", path.display(), ckpt.display());
    Ok(())
}

/// `xt-sweep`: rate vs expected DEMUX crosstalk of the second mode, per
/// method and seed, plus the interpolated crossing of the target rate.
pub fn run_xt_sweep(ctx: &RunContext) -> anyhow::Result<()> {
    let path = ctx.out_dir.join("xt_sweep.csv");
    let mut sink = CsvSink::open(
        &path,
        "xt-sweep-v1",
        "method,m,snr_db,xt2_db,p1_dbm,p2_dbm,rate_bits,seed",
        &ctx.hash(),
        ctx.seed,
    )?;
    let m = ctx.cfg.link.mod_order;
    let snr = ctx.cfg.link.snr_db;
    let methods: Vec<(PrecoderKind, DetectorKind)> = ctx
        .cfg
        .sweep
        .ae_methods
        .iter()
        .map(|s| parse_method(s))
        .collect::<anyhow::Result<_>>()?;

    let mut mean_rates: Vec<Vec<f64>> = vec![Vec::new(); methods.len()];
    for &xt2 in &ctx.cfg.sweep.xt2_demux_db {
        let mut cfg = ctx.cfg.clone();
        cfg.components.demux.mean_xt_db[1] = xt2;
        let link = cfg.link_config(m, snr);
        for (mi, &(precoder, detector)) in methods.iter().enumerate() {
            let mut acc = 0.0;
            for &seed in &ctx.cfg.sweep.seeds {
                let t0 = Instant::now();
                let tc = ctx.train_config(precoder, detector, seed);
                let (out, rate) = match train_and_rate(&link, &tc) {
                    Ok(v) => v,
                    Err(e) => {
                        sink.row(&format!(
                            "# failed method={} xt2_db={xt2} seed={seed}: {e}",
                            method_label(precoder, detector)
                        ))?;
                        eprintln!("xt-sweep {} xt2={xt2}: FAILED ({e})", method_label(precoder, detector));
                        acc += f64::NAN;
                        continue;
                    }
                };
                acc += rate;
                sink.row(&format!(
                    "{},{},{},{},{},{},{},{}",
                    method_label(precoder, detector),
                    m,
                    cell(snr),
                    cell(xt2),
                    cell(out.report.power_dbm[0]),
                    cell(out.report.power_dbm[1]),
                    cell(rate),
                    seed,
                ))?;
                eprintln!(
                    "xt-sweep {} xt2={xt2} seed={seed}: {rate:.4} bits ({:.1}s)",
                    method_label(precoder, detector),
                    t0.elapsed().as_secs_f64()
                );
            }
            mean_rates[mi].push(acc / ctx.cfg.sweep.seeds.len() as f64);
        }
    }

    // Crossings of the target rate (seed-mean, linear interpolation).
    let cpath = ctx.out_dir.join("xt_crossings.csv");
    let mut csink = CsvSink::open(
        &cpath,
        "xt-crossings-v1",
        "method,target_rate_bits,crossing_xt2_db",
        &ctx.hash(),
        ctx.seed,
    )?;
    for (mi, &(precoder, detector)) in methods.iter().enumerate() {
        let crossing = crossing_db(
            &ctx.cfg.sweep.xt2_demux_db,
            &mean_rates[mi],
            ctx.cfg.sweep.target_rate_bits,
        );
        csink.row(&format!(
            "{},{},{}",
            method_label(precoder, detector),
            cell(ctx.cfg.sweep.target_rate_bits),
            crossing.map_or("none".to_string(), cell),
        ))?;
    }
    println!("wrote {} and {}", path.display(), cpath.display());
    Ok(())
}

/// Largest crosstalk (in dB) at which the rate still meets the target,
/// linearly interpolated; rates are assumed nonincreasing in crosstalk.
pub fn crossing_db(xt_db: &[f64], rates: &[f64], target: f64) -> Option<f64> {
    debug_assert_eq!(xt_db.len(), rates.len());
    let mut best: Option<f64> = None;
    for i in 0..xt_db.len() {
        if rates[i] >= target {
            best = Some(xt_db[i]);
        }
    }
    // Refine between the last point meeting the target and its
    // successor.
    for i in 0..xt_db.len().saturating_sub(1) {
        let (r0, r1) = (rates[i], rates[i + 1]);
        if (r0 >= target) != (r1 >= target) && (r1 - r0).abs() > 1e-12 {
            let t = (target - r0) / (r1 - r0);
            let x = xt_db[i] + t * (xt_db[i + 1] - xt_db[i]);
            best = Some(best.map_or(x, |b| b.max(x)));
        }
    }
    best
}

/// `fixed-channel`: BAA vs AE rates across SNR with zero drift.
pub fn run_fixed_channel(ctx: &RunContext) -> anyhow::Result<()> {
    let path = ctx.out_dir.join("fixed_channel.csv");
    let mut sink = CsvSink::open(
        &path,
        "fixed-channel-v1",
        "method,m,snr_db,xt2_db,p1_dbm,p2_dbm,rate_bits,seed",
        &ctx.hash(),
        ctx.seed,
    )?;
    let m = ctx.cfg.link.mod_order;
    let mut cfg = ctx.cfg.clone();
    cfg.components.mux.xt_range_db = 0.0;
    cfg.components.spl.xt_range_db = 0.0;
    cfg.components.demux.xt_range_db = 0.0;
    let xt2 = cfg.components.demux.mean_xt_db[1];

    let params = ctx.baa_params(m, ctx.seed)?;
    let methods = [
        ("baa", None),
        ("prec2/det1", Some((PrecoderKind::Prec2, DetectorKind::Det1))),
        ("prec3/det2", Some((PrecoderKind::Prec3, DetectorKind::Det2))),
    ];
    for &snr in &cfg.sweep.snr_db {
        let link = cfg.link_config(m, snr);
        for (label, method) in &methods {
            let t0 = Instant::now();
            let (rate, p_dbm, seed) = match method {
                None => {
                    let alloc = PowerAllocation::equal_split(link.p_tot_mw(), link.n_modes);
                    let r = baa::baa_capacity(&link, &alloc, &params)
                        .map_err(anyhow::Error::new)?;
                    (r.reported_mi_bits, r.alloc.dbm(), ctx.seed)
                }
                Some((precoder, detector)) => {
                    let seed = ctx.cfg.sweep.seeds[0];
                    let tc = ctx.train_config(*precoder, *detector, seed);
                    let (out, rate) = train_and_rate(&link, &tc)?;
                    (rate, out.report.power_dbm.clone(), seed)
                }
            };
            sink.row(&format!(
                "{},{},{},{},{},{},{},{}",
                label,
                m,
                cell(snr),
                cell(xt2),
                cell(p_dbm[0]),
                cell(p_dbm[1]),
                cell(rate),
                seed,
            ))?;
            eprintln!(
                "fixed-channel {label} snr={snr}: {rate:.4} bits ({:.1}s)",
                t0.elapsed().as_secs_f64()
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates_the_last_downward_transition() {
        let xt = [-16.0, -14.0, -12.0, -10.0];
        // Monotone decreasing rates crossing 5.0 between -14 and -12.
        let rates = [5.6, 5.2, 4.8, 3.9];
        let c = crossing_db(&xt, &rates, 5.0).unwrap();
        assert!((c - (-13.0)).abs() < 1e-12, "crossing {c}");
        // Target above every rate: no crossing.
        assert!(crossing_db(&xt, &rates, 6.0).is_none());
        // Target below every rate: tolerant up to the last grid point.
        assert_eq!(crossing_db(&xt, &rates, 1.0), Some(-10.0));
    }

    #[test]
    fn method_strings_parse() {
        assert!(parse_method("prec3/det1").is_ok());
        assert!(parse_method("prec1lin/gaussian").is_ok());
        assert!(parse_method("prec9/det1").is_err());
        assert!(parse_method("prec1").is_err());
    }
}
