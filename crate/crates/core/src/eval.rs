//! Activation-distribution evaluation: rank embeddings by predicted region
//! response and summarize pool, top-k pool, and top-k generated sets.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::Embedding;
use crate::encoder::{EncoderError, EncoderModel};
use crate::objective::{region_mean, NeuralObjective, ObjectiveError, RoiAtlas};
use crate::persist::{write_atomic, PersistError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to rank or summarize")]
    Empty,
    #[error("k must be >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the {what} size {len}")]
    KTooLarge { k: usize, what: &'static str, len: usize },
    #[error("score {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("report CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// What to rank by. Objectives score as `-loss`, so larger is better in both cases.
#[derive(Debug, Clone, Copy)]
pub enum RankTarget<'a> {
    Region(&'a RoiAtlas, &'a str),
    Objective(&'a NeuralObjective),
}

/// Predicted score of every embedding under `target`.
pub fn scores(model: &EncoderModel, target: RankTarget<'_>, embeddings: &[Embedding]) -> Result<Vec<f64>, EvalError> {
    if embeddings.is_empty() {
        return Err(EvalError::Empty);
    }
    embeddings
        .par_iter()
        .map(|e| {
            let r = model.predict(e)?;
            Ok(match target {
                RankTarget::Region(atlas, region) => region_mean(atlas, region, &r)?,
                RankTarget::Objective(obj) => -obj.loss(&r)?,
            })
        })
        .collect()
}

/// Indices in descending score order; equal scores keep ascending index order.
pub fn rank_by_scores(scores: &[f64]) -> Result<Vec<usize>, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
        return Err(EvalError::NonFinite { index, value });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(idx)
}

pub fn rank_by_region_mean(
    model: &EncoderModel,
    embeddings: &[Embedding],
    target: RankTarget<'_>,
) -> Result<Vec<usize>, EvalError> {
    rank_by_scores(&scores(model, target, embeddings)?)
}

/// Summary of a sample. Quartiles use inclusive linear interpolation:
/// position `p·(n-1)` in the sorted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

pub const STAT_NAMES: [&str; 7] = ["count", "min", "q1", "median", "mean", "q3", "max"];

impl DistributionStats {
    pub fn from_values(values: &[f64]) -> Result<Self, EvalError> {
        if values.is_empty() {
            return Err(EvalError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(EvalError::NonFinite { index, value });
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Self {
            count: s.len(),
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }

    fn values(&self) -> [f64; 7] {
        [
            self.count as f64,
            self.min,
            self.q1,
            self.median,
            self.mean,
            self.q3,
            self.max,
        ]
    }
}

/// Inclusive linear-interpolation quantile of a sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationReport {
    pub region: String,
    pub k: usize,
    pub pool: DistributionStats,
    pub top_pool: DistributionStats,
    pub generated: DistributionStats,
}

impl ActivationReport {
    /// Whether every top-k generated score beats every pool score in the top k.
    pub fn generated_beats_pool(&self) -> bool {
        self.generated.min > self.top_pool.max
    }

    /// Sanity flag: with `k` much smaller than the pool, the top-k pool should
    /// sit above the pool median.
    pub fn top_pool_above_median(&self) -> bool {
        self.top_pool.min >= self.pool.median
    }

    fn blocks(&self) -> [(&'static str, &DistributionStats); 3] {
        [
            ("pool", &self.pool),
            ("top_pool", &self.top_pool),
            ("generated", &self.generated),
        ]
    }
}

fn top_k(scores: &[f64], k: usize) -> Result<Vec<f64>, EvalError> {
    Ok(rank_by_scores(scores)?.into_iter().take(k).map(|i| scores[i]).collect())
}

/// Scores pool and generated embeddings with `model` on `region`, keeping the
/// top `k` of each.
pub fn activation_report(
    model: &EncoderModel,
    atlas: &RoiAtlas,
    region: &str,
    pool: &[Embedding],
    generated: &[Embedding],
    k: usize,
) -> Result<ActivationReport, EvalError> {
    if pool.is_empty() || generated.is_empty() {
        return Err(EvalError::Empty);
    }
    let target = RankTarget::Region(atlas, region);
    report_from_scores(
        region,
        &scores(model, target, pool)?,
        &scores(model, target, generated)?,
        k,
    )
}

pub fn report_from_scores(
    region: &str,
    pool: &[f64],
    generated: &[f64],
    k: usize,
) -> Result<ActivationReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    for (what, len) in [("pool", pool.len()), ("generated set", generated.len())] {
        if len == 0 {
            return Err(EvalError::Empty);
        }
        if k > len {
            return Err(EvalError::KTooLarge { k, what, len });
        }
    }
    Ok(ActivationReport {
        region: region.to_string(),
        k,
        pool: DistributionStats::from_values(pool)?,
        top_pool: DistributionStats::from_values(&top_k(pool, k)?)?,
        generated: DistributionStats::from_values(&top_k(generated, k)?)?,
    })
}

pub const CSV_HEADER: [&str; 4] = ["region", "distribution", "stat", "value"];

/// One row per (region, distribution, stat). Values use shortest round-trip formatting.
pub fn reports_to_csv(reports: &[ActivationReport]) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| EvalError::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        for (dist, stats) in r.blocks() {
            for (name, value) in STAT_NAMES.iter().zip(stats.values()) {
                w.write_record([r.region.as_str(), dist, name, &value.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses CSV written by [`reports_to_csv`]. `k` is recovered from the top-pool count.
pub fn reports_from_csv(text: &str) -> Result<Vec<ActivationReport>, EvalError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let bad = |line: usize, message: String| EvalError::Csv { line, message };
    let header = rd.headers().map_err(|e| bad(1, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(1, format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut rows: Vec<(String, String, String, f64)> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(line, format!("expected 4 fields, got {}", rec.len())));
        }
        let value = rec[3]
            .parse::<f64>()
            .map_err(|_| bad(line, format!("invalid value {:?}", &rec[3])))?;
        rows.push((rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), value));
    }
    let block = STAT_NAMES.len();
    if rows.is_empty() || rows.len() % (3 * block) != 0 {
        return Err(bad(rows.len() + 1, "incomplete report block".into()));
    }
    let mut out = Vec::new();
    for (ri, chunk) in rows.chunks(3 * block).enumerate() {
        let region = chunk[0].0.clone();
        let mut stats = Vec::new();
        for (di, dist) in ["pool", "top_pool", "generated"].into_iter().enumerate() {
            let mut v = [0.0; 7];
            for (si, name) in STAT_NAMES.iter().enumerate() {
                let off = di * block + si;
                let (r, d, s, x) = &chunk[off];
                if *r != region || d != dist || s != name {
                    return Err(bad(
                        ri * 3 * block + off + 2,
                        format!("expected {region},{dist},{name}"),
                    ));
                }
                v[si] = *x;
            }
            stats.push(DistributionStats {
                count: v[0] as usize,
                min: v[1],
                q1: v[2],
                median: v[3],
                mean: v[4],
                q3: v[5],
                max: v[6],
            });
        }
        out.push(ActivationReport {
            region,
            k: stats[1].count,
            pool: stats[0],
            top_pool: stats[1],
            generated: stats[2],
        });
    }
    Ok(out)
}

/// Box plots (whiskers at min/max) of the three distributions per region.
pub fn reports_to_svg(reports: &[ActivationReport]) -> Result<String, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    const BOX_W: f64 = 40.0;
    const GAP: f64 = 20.0;
    const GROUP_GAP: f64 = 50.0;
    const TOP: f64 = 30.0;
    const PLOT_H: f64 = 300.0;
    const LEFT: f64 = 60.0;
    let colors = ["#9e9e9e", "#4c72b0", "#dd8452"];

    let lo = reports.iter().flat_map(|r| r.blocks().map(|(_, s)| s.min)).fold(f64::INFINITY, f64::min);
    let hi = reports.iter().flat_map(|r| r.blocks().map(|(_, s)| s.max)).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y = |v: f64| TOP + PLOT_H * (1.0 - (v - lo) / span);
    let group_w = 3.0 * BOX_W + 2.0 * GAP;
    let width = LEFT + reports.len() as f64 * (group_w + GROUP_GAP) + GROUP_GAP;
    let height = TOP + PLOT_H + 60.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label:.3}</text>"#,
            LEFT - 4.0,
            y(v) + 4.0
        );
    }
    for (ri, r) in reports.iter().enumerate() {
        let gx = LEFT + GROUP_GAP + ri as f64 * (group_w + GROUP_GAP);
        for (bi, (name, st)) in r.blocks().into_iter().enumerate() {
            let x = gx + bi as f64 * (BOX_W + GAP);
            let cx = x + BOX_W / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                y(st.max),
                y(st.min)
            );
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{BOX_W}" height="{:.2}" fill="{}" stroke="black"><title>{} {name}</title></rect>"#,
                y(st.q3),
                (y(st.q1) - y(st.q3)).max(0.5),
                colors[bi],
                r.region
            );
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{m:.2}" x2="{:.2}" y2="{m:.2}" stroke="black" stroke-width="2"/>"#,
                x + BOX_W,
                m = y(st.median)
            );
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{name}</text>"#,
                TOP + PLOT_H + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{} (k = {})</text>"#,
            gx + group_w / 2.0,
            TOP + PLOT_H + 36.0,
            r.region,
            r.k
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

pub fn emit_report(reports: &[ActivationReport], path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    let text = match format {
        ReportFormat::Csv => reports_to_csv(reports)?,
        ReportFormat::Svg => reports_to_svg(reports)?,
    };
    Ok(write_atomic(path, text.as_bytes())?)
}
