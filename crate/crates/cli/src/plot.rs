//! Plot-ready exports: per-series gnuplot `.dat` files, a ready-to-run
//! `.gp` script, and an optional static SVG line chart.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::csvio::{read_csv, CsvTable};

/// One extracted series of (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Schema-aware series extraction. Sweeps with a `method` column give
/// one series per method over `rate_bits`; otherwise every value column
/// becomes a series against the detected x axis.
pub fn extract_series(table: &CsvTable) -> anyhow::Result<(String, Vec<Series>)> {
    if table.schema.is_none() {
        bail!("CSV carries no schema header; refusing to guess the layout");
    }
    if table.rows.is_empty() {
        bail!("CSV has no data rows");
    }
    let col = |name: &str| table.columns.iter().position(|c| c == name);
    let numeric = |idx: usize| -> anyhow::Result<Vec<f64>> {
        table
            .rows
            .iter()
            .map(|r| {
                r[idx]
                    .parse::<f64>()
                    .with_context(|| format!("non-numeric cell `{}` in column {}", r[idx], table.columns[idx]))
            })
            .collect()
    };

    // The x axis is the first conventional column that actually varies.
    let mut x_name = None;
    for cand in ["snr_db", "xt2_db", "iteration", "m"] {
        if let Some(i) = col(cand) {
            let vals = numeric(i)?;
            let varies = vals.windows(2).any(|w| w[0] != w[1]);
            if varies || table.rows.len() == 1 {
                x_name = Some((cand.to_string(), vals));
                break;
            }
        }
    }
    let (x_name, xs) = x_name.ok_or_else(|| anyhow::anyhow!("no varying x column found"))?;

    let mut series = Vec::new();
    if let (Some(mcol), Some(ycol)) = (col("method"), col("rate_bits").or_else(|| col("mi_bits"))) {
        let ys = numeric(ycol)?;
        let mut names: Vec<String> = table.rows.iter().map(|r| r[mcol].clone()).collect();
        names.sort();
        names.dedup();
        for name in names {
            let pts: Vec<(f64, f64)> = table
                .rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r[mcol] == name)
                .map(|(i, _)| (xs[i], ys[i]))
                .collect();
            series.push(Series {
                name: name.replace('/', "-"),
                points: pts,
            });
        }
    } else {
        let skip = ["seed", "converged", "iterations", "m"];
        for (i, cname) in table.columns.iter().enumerate() {
            if cname == &x_name || skip.contains(&cname.as_str()) {
                continue;
            }
            let Ok(ys) = numeric(i) else { continue };
            series.push(Series {
                name: cname.clone(),
                points: xs.iter().copied().zip(ys).collect(),
            });
        }
    }
    if series.is_empty() {
        bail!("no plottable series in CSV");
    }
    for s in &mut series {
        s.points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x values"));
    }
    Ok((x_name, series))
}

/// Emit `.dat` files plus a gnuplot script (and optionally an SVG) next
/// to the source CSV's stem inside `out_dir`. Nothing is written if the
/// CSV fails to parse.
pub fn emit_plot_data(csv: &Path, out_dir: &Path, svg: bool) -> anyhow::Result<Vec<PathBuf>> {
    let table = read_csv(csv)?;
    let (x_name, series) = extract_series(&table)?;
    let stem = csv
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot")
        .to_string();
    fs::create_dir_all(out_dir)?;

    let mut written = Vec::new();
    for s in &series {
        let path = out_dir.join(format!("{stem}_{}.dat", s.name));
        let mut text = format!("# {} vs {}\n", s.name, x_name);
        for (x, y) in &s.points {
            text.push_str(&format!("{x:.6} {y:.6}\n"));
        }
        fs::write(&path, text)?;
        written.push(path);
    }

    let gp = out_dir.join(format!("{stem}.gp"));
    let mut script = String::new();
    script.push_str("set grid\n");
    script.push_str(&format!("set xlabel \"{x_name}\"\n"));
    script.push_str("set ylabel \"bits/symbol\"\n");
    script.push_str("set key left top\n");
    script.push_str("plot ");
    let parts: Vec<String> = series
        .iter()
        .map(|s| format!("\"{stem}_{}.dat\" using 1:2 with linespoints title \"{}\"", s.name, s.name))
        .collect();
    script.push_str(&parts.join(", \\\n     "));
    script.push('\n');
    fs::write(&gp, script)?;
    written.push(gp);

    if svg {
        let path = out_dir.join(format!("{stem}.svg"));
        fs::write(&path, render_svg(&x_name, &series))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Minimal deterministic SVG line chart.
pub fn render_svg(x_name: &str, series: &[Series]) -> String {
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    // Axes and ticks.
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for k in 0..=5 {
        let fx = xmin + (xmax - xmin) * k as f64 / 5.0;
        let fy = ymin + (ymax - ymin) * k as f64 / 5.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{:.3}</text>\n",
            sx(fx),
            h - mb + 18.0,
            fx
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{x_name}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            ml + 10.0,
            mt + 16.0 * (i as f64 + 1.0),
            s.name
        ));
    }
    out.push_str("</svg>\n");
    out
}
