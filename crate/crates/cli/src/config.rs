//! Experiment configuration: TOML-backed, shipped with the reference
//! component parameters as the built-in `gruner-ofc` profile defaults.

use fmflab::channel::{ComponentSpec, LinkConfig};
use fmflab::seed::fnv1a64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub link: LinkSection,
    pub components: ComponentsSection,
    pub sweep: SweepSection,
    pub train: TrainSection,
    pub baa: BaaSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub n_modes: usize,
    pub mod_order: usize,
    pub v_pi: f64,
    pub p_tot_dbm: f64,
    pub snr_db: f64,
    pub tied_splices: bool,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            n_modes: 2,
            mod_order: 8,
            v_pi: 1.0,
            p_tot_dbm: 3.0,
            snr_db: 20.0,
            tied_splices: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ComponentsSection {
    pub mux: ComponentSection,
    pub spl: ComponentSection,
    pub demux: ComponentSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub mean_xt_db: Vec<f64>,
    pub xt_range_db: f64,
    pub loss_db: Vec<f64>,
}

impl Default for ComponentsSection {
    fn default() -> Self {
        // Expected parameters of the reference 2-mode MUX/splice/DEMUX.
        Self {
            mux: ComponentSection {
                mean_xt_db: vec![-18.0, -15.0],
                xt_range_db: 6.0,
                loss_db: vec![0.7, 1.4],
            },
            spl: ComponentSection {
                mean_xt_db: vec![-25.0, -25.0],
                xt_range_db: 6.0,
                loss_db: vec![0.04, 0.04],
            },
            demux: ComponentSection {
                mean_xt_db: vec![-11.0, -11.0],
                xt_range_db: 6.0,
                loss_db: vec![1.5, 3.0],
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub xt2_demux_db: Vec<f64>,
    pub m_list: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `precoder/detector` pairs for the AE sweeps.
    pub ae_methods: Vec<String>,
    /// Target rate whose crossing the XT sweep reports.
    pub target_rate_bits: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: (0..=30).map(f64::from).collect(),
            xt2_demux_db: (-20..=-5).map(f64::from).collect(),
            m_list: vec![8],
            seeds: vec![1, 2, 3],
            ae_methods: vec![
                "prec1lin/gaussian".into(),
                "prec2/det1".into(),
                "prec3/det1".into(),
            ],
            target_rate_bits: 5.094,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    /// Full-scale training symbols; the desk profile uses
    /// `desk_train_symbols`.
    pub n_train_symbols: usize,
    pub desk_train_symbols: usize,
    pub n_test_symbols: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 200,
            n_train_symbols: 1_000_000,
            desk_train_symbols: 400_000,
            n_test_symbols: 100_000,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaaSection {
    pub tol_bits: f64,
    pub max_iter: usize,
    pub quad_nodes: usize,
    pub n_iter_draws: usize,
    pub n_eval_draws: usize,
    pub grid_step_db: f64,
    /// BAA support cap per dimension in the desk profile.
    pub desk_max_m: usize,
}

impl Default for BaaSection {
    fn default() -> Self {
        Self {
            tol_bits: 1e-6,
            max_iter: 5000,
            quad_nodes: 16,
            n_iter_draws: 32,
            n_eval_draws: 200,
            grid_step_db: 0.05,
            desk_max_m: 16,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            link: LinkSection::default(),
            components: ComponentsSection::default(),
            sweep: SweepSection::default(),
            train: TrainSection::default(),
            baa: BaaSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(format!("unknown profile `{other}` (expected desk|full)")),
        }
    }
}

impl ExperimentConfig {
    /// Built-in defaults (the reference component table).
    pub fn gruner_ofc() -> Self {
        Self::default()
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.sweep.snr_db.is_empty()
            || self.sweep.xt2_demux_db.is_empty()
            || self.sweep.m_list.is_empty()
            || self.sweep.seeds.is_empty()
            || self.sweep.ae_methods.is_empty()
        {
            anyhow::bail!("sweep lists must be nonempty");
        }
        self.link_config(self.link.mod_order, self.link.snr_db)
            .validate()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(())
    }

    /// Stable hash of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }

    pub fn link_config(&self, mod_order: usize, snr_db: f64) -> LinkConfig<f64> {
        let comp = |c: &ComponentSection| ComponentSpec {
            mean_xt_db: c.mean_xt_db.clone(),
            xt_range_db: c.xt_range_db,
            loss_db: c.loss_db.clone(),
        };
        LinkConfig {
            n_modes: self.link.n_modes,
            mod_order,
            v_pi: self.link.v_pi,
            p_tot_dbm: self.link.p_tot_dbm,
            snr_db,
            mux: comp(&self.components.mux),
            spl: comp(&self.components.spl),
            demux: comp(&self.components.demux),
            tied_splices: self.link.tied_splices,
        }
    }

    /// Training symbols for the given profile.
    pub fn train_symbols(&self, profile: Profile) -> usize {
        match profile {
            Profile::Desk => self.train.desk_train_symbols,
            Profile::Full => self.train.n_train_symbols,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_stably() {
        let cfg = ExperimentConfig::gruner_ofc();
        cfg.validate().unwrap();
        assert_eq!(cfg.hash(), cfg.hash());
        // Any change must move the hash.
        let mut other = cfg.clone();
        other.link.snr_db = 21.0;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::gruner_ofc();
        let text = toml::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ExperimentConfig::from_toml("link = { n_modes = 0 }").is_err());
        assert!(ExperimentConfig::from_toml("nonsense = 1").is_err());
        let mut cfg = ExperimentConfig::gruner_ofc();
        cfg.sweep.snr_db.clear();
        assert!(cfg.validate().is_err());
    }
}
