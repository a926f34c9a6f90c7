//! Synthetic recovery benchmark: general cICA over many decomposition seeds,
//! proportional cICA with an estimated γ, and cPCA over a grid of α, all
//! scored against the true foreground patterns.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cica::{fit_general, fit_proportional};
use crate::cumulants::Cumulants;
use crate::decomp::DecompConfig;
use crate::error::Result;
use crate::eval::{cpca_alpha_grid, cpca_components, recovery_scores};
use crate::synth::{generate, SynthMode, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    #[serde(rename = "cica")]
    Cica,
    #[serde(rename = "cpca")]
    Cpca,
    #[serde(rename = "cica-prop")]
    CicaProp,
    #[serde(rename = "cpca-prop")]
    CpcaProp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cica => "cica",
            Method::Cpca => "cpca",
            Method::CicaProp => "cica-prop",
            Method::CpcaProp => "cpca-prop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub n: usize,
    /// Decomposition seeds for general cICA.
    pub seeds: usize,
    /// Size of the cPCA α grid.
    pub alphas: usize,
    /// Data for dimension `p` is drawn with seed `data_seed + p`.
    pub data_seed: u64,
    /// Random starts per extracted component in general cICA.
    pub restarts: usize,
    pub general: bool,
    pub proportional: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: (4..=12).collect(),
            n: 100_000,
            seeds: 100,
            alphas: 100,
            data_seed: 0,
            restarts: 1,
            general: true,
            proportional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: Method,
    /// α for cPCA rows.
    pub hyperparameter: Option<f64>,
    pub p: usize,
    /// Decomposition seed, where one is used.
    pub seed: Option<u64>,
    pub mean_cosine: f64,
    pub rel_frobenius: f64,
    pub runtime_ms: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub method: Method,
    pub p: usize,
    pub runs: usize,
    pub best_cosine: f64,
    pub q1_cosine: f64,
    pub median_cosine: f64,
    pub q3_cosine: f64,
    pub best_frobenius: f64,
    pub gamma: Option<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(method: Method, p: usize, rows: &[BenchRow]) -> Option<BenchSummary> {
    if rows.is_empty() {
        return None;
    }
    let mut cos: Vec<f64> = rows.iter().map(|r| r.mean_cosine).collect();
    cos.sort_by(f64::total_cmp);
    Some(BenchSummary {
        method,
        p,
        runs: rows.len(),
        best_cosine: *cos.last().unwrap(),
        q1_cosine: quantile(&cos, 0.25),
        median_cosine: quantile(&cos, 0.5),
        q3_cosine: quantile(&cos, 0.75),
        best_frobenius: rows.iter().map(|r| r.rel_frobenius).fold(f64::INFINITY, f64::min),
        gamma: rows.iter().find_map(|r| r.gamma),
    })
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn cpca_rows(method: Method, p: usize, cx: &Cumulants, cy: &Cumulants, truth: &nalgebra::DMatrix<f64>, alphas: usize) -> Result<Vec<BenchRow>> {
    cpca_alpha_grid(alphas)
        .into_iter()
        .map(|alpha| {
            let t = Instant::now();
            let est = cpca_components(&cx.covariance, &cy.covariance, alpha, truth.ncols())?;
            let runtime_ms = ms(t);
            let (mean_cosine, rel_frobenius) = recovery_scores(truth, &est)?;
            Ok(BenchRow {
                method,
                hyperparameter: Some(alpha),
                p,
                seed: None,
                mean_cosine,
                rel_frobenius,
                runtime_ms,
                gamma: None,
            })
        })
        .collect()
}

/// Rows for the general protocol at dimension `p`.
pub fn general_rows(p: usize, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut spec = SyntheticSpec::benchmark(p, cfg.data_seed + p as u64, SynthMode::General);
    spec.n_fg = cfg.n;
    spec.n_bg = cfg.n;
    let (x, y, truth) = generate(&spec)?;
    let cx = Cumulants::estimate(&x)?;
    let cy = Cumulants::estimate(&y)?;
    let l = p - 1;
    let mut rows: Vec<BenchRow> = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let dc = DecompConfig {
                restarts: cfg.restarts,
                ..DecompConfig::with_seed(seed)
            };
            let t = Instant::now();
            let model = fit_general(&cx.fourth, &cy.fourth, p, l, &dc)?;
            let runtime_ms = ms(t);
            let (mean_cosine, rel_frobenius) = recovery_scores(&truth.b, &model.foreground_matrix())?;
            Ok(BenchRow {
                method: Method::Cica,
                hyperparameter: None,
                p,
                seed: Some(seed),
                mean_cosine,
                rel_frobenius,
                runtime_ms,
                gamma: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.extend(cpca_rows(Method::Cpca, p, &cx, &cy, &truth.b, cfg.alphas)?);
    Ok(rows)
}

/// Rows for the proportional protocol at dimension `p`.
pub fn proportional_rows(p: usize, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut spec = SyntheticSpec::benchmark(p, cfg.data_seed + p as u64, SynthMode::Proportional);
    spec.n_fg = cfg.n;
    spec.n_bg = cfg.n;
    let (x, y, truth) = generate(&spec)?;
    let cx = Cumulants::estimate(&x)?;
    let cy = Cumulants::estimate(&y)?;
    let dc = DecompConfig::default();
    let t = Instant::now();
    let model = fit_proportional(&cx.fourth, &cy.fourth, p - 1, None, Some(p), &dc)?;
    let runtime_ms = ms(t);
    let (mean_cosine, rel_frobenius) = recovery_scores(&truth.b, &model.foreground_matrix())?;
    let mut rows = vec![BenchRow {
        method: Method::CicaProp,
        hyperparameter: None,
        p,
        seed: Some(dc.seed),
        mean_cosine,
        rel_frobenius,
        runtime_ms,
        gamma: model.gamma,
    }];
    rows.extend(cpca_rows(Method::CpcaProp, p, &cx, &cy, &truth.b, cfg.alphas)?);
    Ok(rows)
}

/// Runs every configured protocol, handing each dimension's rows to `sink`
/// as soon as they are ready, and returns per-method summaries.
pub fn run_bench(cfg: &BenchConfig, mut sink: impl FnMut(&[BenchRow]) -> Result<()>) -> Result<Vec<BenchSummary>> {
    let mut summaries = Vec::new();
    for &p in &cfg.dims {
        let mut rows = Vec::new();
        if cfg.general {
            rows.extend(general_rows(p, cfg)?);
        }
        if cfg.proportional {
            rows.extend(proportional_rows(p, cfg)?);
        }
        sink(&rows)?;
        for m in [Method::Cica, Method::Cpca, Method::CicaProp, Method::CpcaProp] {
            let mine: Vec<BenchRow> = rows.iter().filter(|r| r.method == m).cloned().collect();
            summaries.extend(summarize(m, p, &mine));
        }
        log::info!("bench p = {p} done");
    }
    Ok(summaries)
}
