//! Job execution. Outputs are collected in memory and written only once the
//! whole job has succeeded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use longmem_core::dcca::{pairwise_matrix, rho_vs_scale};
use longmem_core::hurst::{
    detect_crossover, fit_hurst, histogram, panel_fluctuations, CrossoverReport, HurstDistribution,
    SeriesFailure,
};
use longmem_core::network::{
    average_weighted_degree, build_network, detect_communities, split_periods, to_dot, to_graphml,
    CommunityPartition,
};
use longmem_core::series::write_panel;
use longmem_core::synthetic::{fgn_panel, generate_blocks, BlockSpec};
use longmem_core::{DetrendMethod, Error as CoreError, RatePanel, ScaleGrid};
use serde_json::json;

use crate::args::Format;
use crate::error::{CliError, ResultExt};
use crate::job::{
    check_pairs, snapshot_grid, DccaJob, HurstConfig, Job, Manifest, NetworkConfig, NetworkJob,
    OutputConfig, SynthJob,
};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default)]
pub struct Outputs {
    pub files: BTreeMap<String, Vec<u8>>,
    pub failures: Vec<SeriesFailure>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, content: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), content.into());
    }

    fn add_json(&mut self, name: &str, value: &serde_json::Value) {
        let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
        s.push('\n');
        self.add(name, s);
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .runtime()?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)
                .with_context(|| format!("cannot write {}", path.display()))
                .runtime()?;
        }
        Ok(())
    }
}

/// Ids made safe for file names.
fn file_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn profile_len(panel: &RatePanel) -> usize {
    panel.n_dates().saturating_sub(1)
}

pub fn execute(manifest: &Manifest) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let seed = manifest.seed;
    match &manifest.job {
        Job::Hurst(j) => {
            let panel = j.input.load()?;
            let grid = j.hurst.grid.resolve(profile_len(&panel), &j.input.method)?;
            hurst_outputs(
                &panel,
                &j.input.method,
                &j.hurst,
                &grid,
                &j.output,
                "hurst_",
                &mut out,
            )?;
        }
        Job::Dcca(j) => dcca_outputs(j, &mut out)?,
        Job::Network(NetworkJob {
            input,
            network,
            output,
        }) => {
            let panel = input.load()?;
            let plan = plan_network(&panel, &input.method, network)?;
            network_outputs(&plan, &input.method, network, output, seed, &mut out)?;
        }
        Job::Report(j) => {
            let panel = j.input.load()?;
            let method = &j.input.method;
            let grid = j.hurst.grid.resolve(profile_len(&panel), method)?;
            let plan = plan_network(&panel, method, &j.network)?;
            let mut period_grids = Vec::new();
            if !j.network.periods.is_empty() {
                for p in &plan {
                    period_grids.push(j.hurst.grid.resolve(profile_len(&p.panel), method)?);
                }
            }
            hurst_outputs(
                &panel, method, &j.hurst, &grid, &j.output, "hurst_", &mut out,
            )?;
            for (p, g) in plan.iter().zip(&period_grids) {
                let prefix = format!("hurst_{}_", p.tag);
                hurst_outputs(&p.panel, method, &j.hurst, g, &j.output, &prefix, &mut out)?;
            }
            network_outputs(&plan, method, &j.network, &j.output, seed, &mut out)?;
        }
        Job::Synth(spec) => {
            let panel = match *spec {
                SynthJob::Fgn { hurst, n, count } => fgn_panel(count, n, hurst, seed),
                SynthJob::Blocks {
                    n_blocks,
                    block_size,
                    common_weight,
                    hurst,
                    n,
                } => generate_blocks(&BlockSpec {
                    n_blocks,
                    block_size,
                    common_weight,
                    hurst,
                    n,
                    seed,
                }),
            }
            .runtime()?;
            let mut buf = Vec::new();
            write_panel(&panel, &mut buf).runtime()?;
            out.add("panel.csv", buf);
        }
    }
    out.add(MANIFEST, manifest.to_bytes());
    Ok(out)
}

fn hurst_outputs(
    panel: &RatePanel,
    method: &DetrendMethod,
    cfg: &HurstConfig,
    grid: &ScaleGrid,
    output: &OutputConfig,
    prefix: &str,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    let mut crossovers: Vec<(String, Option<CrossoverReport>)> = Vec::new();
    for (id, f) in panel_fluctuations(panel, method, Some(grid)).runtime()? {
        let f = match f {
            Ok(f) => f,
            Err(e) => {
                failures.push(SeriesFailure {
                    series_id: id,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match fit_hurst(&f, Some(cfg.fit_range)) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(SeriesFailure {
                series_id: id.clone(),
                reason: e.to_string(),
            }),
        }
        crossovers.push((id, detect_crossover(&f, &cfg.crossover).ok()));
        curves.push(f);
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.hurst).collect();
    let (bins, summary) = histogram(&values, cfg.bin_width);
    let dist = HurstDistribution {
        estimates,
        failures,
        histogram: bins,
        summary,
    };
    let label = prefix.trim_end_matches('_');
    match &dist.summary {
        Some(s) => println!(
            "{label}: {} estimates, mode bin [{}, {}) with {}",
            dist.estimates.len(),
            s.mode_low,
            s.mode_high,
            s.mode_count
        ),
        None => println!("{label}: no estimates"),
    }

    if output.wants(Format::Csv) {
        out.add(format!("{prefix}estimates.csv"), dist.estimates_table());
        out.add(format!("{prefix}histogram.csv"), dist.histogram_table());
        let mut t = String::from("id,s,F\n");
        for f in &curves {
            for p in &f.points {
                let _ = writeln!(t, "{},{},{}", f.series_id, p.scale, p.value);
            }
        }
        out.add(format!("{prefix}fluctuation.csv"), t);
        let mut t = String::from("id,breakpoint,slope_left,slope_right,improvement\n");
        for (id, r) in &crossovers {
            match r {
                Some(r) => {
                    let b = r
                        .breakpoint_scale
                        .map(|b| b.to_string())
                        .unwrap_or_default();
                    let _ = writeln!(
                        t,
                        "{id},{b},{},{},{}",
                        r.slope_left, r.slope_right, r.improvement_ratio
                    );
                }
                None => {
                    let _ = writeln!(t, "{id},,,,");
                }
            }
        }
        out.add(format!("{prefix}crossover.csv"), t);
        let mut t = String::from("id,reason\n");
        for f in &dist.failures {
            let _ = writeln!(t, "{},\"{}\"", f.series_id, f.reason.replace('"', "'"));
        }
        out.add(format!("{prefix}failures.csv"), t);
    }
    if output.wants(Format::Json) {
        let crossovers: Vec<_> = crossovers
            .iter()
            .map(|(id, r)| json!({ "id": id, "report": r }))
            .collect();
        out.add_json(
            &format!("{prefix}results.json"),
            &json!({
                "method": method,
                "grid": grid,
                "fit_range": cfg.fit_range,
                "distribution": dist,
                "crossovers": crossovers,
                "fluctuations": curves,
            }),
        );
    }
    out.failures.extend(dist.failures);
    Ok(())
}

fn dcca_outputs(j: &DccaJob, out: &mut Outputs) -> Result<(), CliError> {
    let method = &j.input.method;
    let panel = j.input.load()?;
    if panel.n_series() < 2 {
        return Err(CliError::Invalid(anyhow!(
            "need at least 2 aligned series, found {}",
            panel.n_series()
        )));
    }
    check_pairs(&panel, &j.pairs).invalid()?;
    let n = profile_len(&panel);
    let curve_grid = if j.pairs.is_empty() {
        None
    } else {
        Some(j.curve_grid.resolve(n, method)?)
    };
    let scales = if j.all {
        snapshot_grid(&j.scales, n, method)?.scales().to_vec()
    } else {
        Vec::new()
    };

    let mut curves = Vec::new();
    if let Some(grid) = &curve_grid {
        for (a, b) in &j.pairs {
            let sa = panel.series(a).runtime()?;
            let sb = panel.series(b).runtime()?;
            let c = rho_vs_scale(&sa, &sb, grid, method).runtime()?;
            if j.output.wants(Format::Csv) {
                out.add(
                    format!("rho_{}__{}.csv", file_id(a), file_id(b)),
                    c.to_table(),
                );
            }
            curves.push(c);
        }
    }
    let mut matrices = Vec::new();
    for &s in &scales {
        let m = pairwise_matrix(&panel, s, method).runtime()?;
        if j.output.wants(Format::Csv) {
            out.add(format!("matrix_s{s}.csv"), m.to_table());
        }
        matrices.push(m);
    }
    println!("dcca: {} curves, {} matrices", curves.len(), matrices.len());
    if j.output.wants(Format::Json) {
        out.add_json(
            "dcca.json",
            &json!({ "method": method, "curves": curves, "matrices": matrices }),
        );
    }
    Ok(())
}

struct PeriodPlan {
    tag: String,
    window: Option<(chrono::NaiveDate, chrono::NaiveDate)>,
    panel: RatePanel,
    snapshots: ScaleGrid,
    degree_grid: ScaleGrid,
}

fn plan_network(
    panel: &RatePanel,
    method: &DetrendMethod,
    cfg: &NetworkConfig,
) -> Result<Vec<PeriodPlan>, CliError> {
    if panel.n_series() < 2 {
        return Err(CliError::Invalid(anyhow!(
            "need at least 2 aligned series, found {}",
            panel.n_series()
        )));
    }
    let parts: Vec<(String, Option<_>, RatePanel)> = if cfg.periods.is_empty() {
        vec![("full".into(), None, panel.clone())]
    } else {
        split_periods(panel, &cfg.periods)
            .invalid()?
            .into_iter()
            .zip(&cfg.periods)
            .enumerate()
            .map(|(i, (p, w))| (format!("p{}", i + 1), Some(*w), p))
            .collect()
    };
    parts
        .into_iter()
        .map(|(tag, window, panel)| {
            let n = profile_len(&panel);
            let snapshots = snapshot_grid(&cfg.scales, n, method)
                .map_err(|e| CliError::Invalid(anyhow!("period {tag}: {}", inner(e))))?;
            let degree_grid = cfg
                .degree_grid
                .resolve(n, method)
                .map_err(|e| CliError::Invalid(anyhow!("period {tag}: {}", inner(e))))?;
            Ok(PeriodPlan {
                tag,
                window,
                panel,
                snapshots,
                degree_grid,
            })
        })
        .collect()
}

fn inner(e: CliError) -> anyhow::Error {
    match e {
        CliError::Invalid(e) | CliError::Runtime(e) => e,
    }
}

fn network_outputs(
    plan: &[PeriodPlan],
    method: &DetrendMethod,
    cfg: &NetworkConfig,
    output: &OutputConfig,
    seed: u64,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let mut degree = String::from("period,s,avg_degree\n");
    let mut summary =
        String::from("period,s,n_nodes,n_edges,n_communities,modularity,avg_degree\n");
    let mut periods_json = Vec::new();
    for p in plan {
        let mut snapshots_json = Vec::new();
        for &s in p.snapshots.scales() {
            let m = pairwise_matrix(&p.panel, s, method).runtime()?;
            let net = build_network(&m, cfg.threshold).runtime()?;
            if net.edges.is_empty() {
                eprintln!(
                    "warning: period {} scale {s}: no pair reaches |rho| >= {}",
                    p.tag, cfg.threshold
                );
            }
            let partition = match detect_communities(&net, cfg.resolution, seed) {
                Ok(part) => Some(part),
                Err(CoreError::NoPositiveEdges) => {
                    eprintln!(
                        "warning: period {} scale {s}: only negative edges, no partition",
                        p.tag
                    );
                    None
                }
                Err(e) => return Err(CliError::Runtime(e.into())),
            };
            let d = average_weighted_degree(&net);
            let stem = format!("{}_s{s}", p.tag);
            let (nc, q) = partition
                .as_ref()
                .map_or((String::new(), String::new()), |x| {
                    (x.n_communities().to_string(), x.modularity_q.to_string())
                });
            let _ = writeln!(
                summary,
                "{},{s},{},{},{nc},{q},{d}",
                p.tag,
                net.n_nodes(),
                net.n_edges()
            );
            println!(
                "network {} s={s}: {} edges, {} communities",
                p.tag,
                net.n_edges(),
                if nc.is_empty() { "no" } else { &nc }
            );
            if output.wants(Format::Csv) {
                out.add(format!("matrix_{stem}.csv"), m.to_table());
                out.add(format!("edges_{stem}.csv"), net.edge_table());
                out.add(
                    format!("partition_{stem}.csv"),
                    partition.as_ref().map_or_else(
                        || String::from("id,community\n"),
                        CommunityPartition::to_table,
                    ),
                );
            }
            if output.wants(Format::Graphml) {
                out.add(
                    format!("network_{stem}.graphml"),
                    to_graphml(&net, partition.as_ref()),
                );
            }
            if output.wants(Format::Dot) {
                out.add(
                    format!("network_{stem}.dot"),
                    to_dot(&net, partition.as_ref()),
                );
            }
            snapshots_json.push(json!({
                "scale": s,
                "matrix": m,
                "network": net,
                "partition": partition,
                "avg_degree": d,
            }));
        }
        let mut curve = Vec::new();
        for &s in p.degree_grid.scales() {
            let m = pairwise_matrix(&p.panel, s, method).runtime()?;
            let d = average_weighted_degree(&build_network(&m, cfg.threshold).runtime()?);
            let _ = writeln!(degree, "{},{s},{d}", p.tag);
            curve.push((s, d));
        }
        periods_json.push(json!({
            "tag": p.tag,
            "window": p.window,
            "n_dates": p.panel.n_dates(),
            "snapshots": snapshots_json,
            "degree_curve": curve,
        }));
    }
    if output.wants(Format::Csv) {
        out.add("degree.csv", degree);
        out.add("network_summary.csv", summary);
    }
    if output.wants(Format::Json) {
        out.add_json(
            "network.json",
            &json!({
                "method": method,
                "threshold": cfg.threshold,
                "resolution": cfg.resolution,
                "seed": seed,
                "periods": periods_json,
            }),
        );
    }
    Ok(())
}
