//! Scene generation, single-filter runs and the paired Monte Carlo study.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};
use glmb_core::density::GlmbDensity;
use glmb_core::models::Observation;
use glmb_core::ospa::ospa;
use glmb_core::sim::{detect, emitters, generate_truth, render_image, TruthObject};
use glmb_core::{Estimate, GlmbFilter};
use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Variant};
use crate::output::{ComponentSummary, DensitySnapshot, LabelExistence, MetricRow, TrackRow};

/// Mixes `parts` into `seed` (SplitMix64 finaliser per step).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p)))
}

pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, &[0x5255_4E, run as u64])
}

/// Rendered input for one run: truth, images and detections per frame.
#[derive(Debug, Clone)]
pub struct RunData {
    pub truth: Vec<Vec<TruthObject>>,
    pub observations: Vec<Observation>,
    pub challenging: Vec<bool>,
    /// FNV-1a over the bits of every pixel and detection.
    pub checksum: u64,
}

pub fn simulate(cfg: &Config, seed: u64) -> Result<RunData> {
    let scenario = cfg.truth_scenario();
    let truth = generate_truth(&scenario, derive_seed(seed, &[1])).map_err(|e| anyhow!("truth: {e}"))?;
    let s = &cfg.scenario;
    let mut observations = Vec::with_capacity(truth.len());
    let mut challenging = Vec::with_capacity(truth.len());
    let mut checksum = Fnv::new();
    for (k, objects) in truth.iter().enumerate() {
        let frame = k as u32 + 1;
        let em = emitters(&scenario, objects, frame);
        let image = render_image(
            s.width,
            s.height,
            &em,
            s.noise_power,
            s.psf_r,
            s.psf_s,
            derive_seed(seed, &[2, frame as u64]),
        );
        let detections = detect(&image, s.threshold);
        let low_snr = em.iter().any(|e| e.snr_db < cfg.filter.nominal_snr_db);
        let occluded = objects.iter().enumerate().any(|(i, a)| {
            objects[i + 1..]
                .iter()
                .any(|b| (a.position() - b.position()).norm() < s.occlusion_distance)
        });
        challenging.push(low_snr || occluded);
        image.data().iter().for_each(|v| checksum.write(v.to_bits()));
        detections.iter().for_each(|z| {
            checksum.write(z[0].to_bits());
            checksum.write(z[1].to_bits());
        });
        observations.push(Observation { image, detections });
    }
    Ok(RunData {
        truth,
        observations,
        challenging,
        checksum: checksum.0,
    })
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Filter output for one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: u32,
    pub estimates: Vec<Estimate>,
    pub snapshot: DensitySnapshot,
}

pub fn snapshot(density: &GlmbDensity, top: usize) -> DensitySnapshot {
    let mut order: Vec<usize> = (0..density.len()).collect();
    let w = density.weights();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    DensitySnapshot {
        frame: density.frame,
        components: density.len(),
        cardinality_pmf: density.cardinality_distribution(),
        top: order
            .iter()
            .take(top)
            .map(|&i| ComponentSummary {
                weight: w[i],
                labels: density.components()[i]
                    .labels()
                    .map(|l| [l.birth_time, l.birth_index])
                    .collect(),
            })
            .collect(),
        existence: density
            .labels()
            .into_iter()
            .map(|l| LabelExistence {
                label: [l.birth_time, l.birth_index],
                exist_prob: density.existence(l),
            })
            .collect(),
    }
}

/// Runs one filter variant over recorded observations.
pub fn track(
    cfg: &Config,
    variant: Variant,
    observations: &[Observation],
    seed: u64,
    h_max: Option<usize>,
) -> Result<Vec<FrameOutput>> {
    let models = cfg.model_set(variant)?;
    let mut filter = GlmbFilter::new(models, cfg.filter_config(h_max)).map_err(|e| anyhow!("{e}"))?;
    let mut out = Vec::with_capacity(observations.len());
    for (k, obs) in observations.iter().enumerate() {
        let frame = k as u32 + 1;
        filter
            .step(obs, derive_seed(seed, &[3, frame as u64]))
            .map_err(|e| anyhow!("{variant} frame {frame}: {e}"))?;
        let d = filter.density();
        if !d.check_normalized(1e-9) {
            return Err(anyhow!("{variant} frame {frame}: posterior not normalised"));
        }
        let estimates = d
            .estimate_mme()
            .into_iter()
            .map(|mut e| {
                e.existence = d.existence(e.label);
                e
            })
            .collect();
        out.push(FrameOutput {
            frame,
            estimates,
            snapshot: snapshot(d, 10),
        });
    }
    Ok(out)
}

pub fn track_rows(outputs: &[FrameOutput], run: usize, variant: &str) -> Vec<TrackRow> {
    outputs
        .iter()
        .flat_map(|f| {
            f.estimates.iter().map(move |e| TrackRow {
                frame: f.frame,
                run,
                variant: variant.to_string(),
                label_birth_time: e.label.birth_time,
                label_index: e.label.birth_index,
                x: e.state[0],
                y: e.state[2],
                exist_prob: e.existence,
            })
        })
        .collect()
}

pub fn truth_rows(truth: &[Vec<TruthObject>], run: usize) -> Vec<TrackRow> {
    truth
        .iter()
        .enumerate()
        .flat_map(|(k, objs)| {
            objs.iter().map(move |o| TrackRow {
                frame: k as u32 + 1,
                run,
                variant: "truth".into(),
                label_birth_time: o.label.birth_time,
                label_index: o.label.birth_index,
                x: o.state[0],
                y: o.state[2],
                exist_prob: 1.0,
            })
        })
        .collect()
}

fn positions<'a>(rows: impl Iterator<Item = &'a TrackRow>) -> Vec<Vector2<f64>> {
    rows.map(|r| Vector2::new(r.x, r.y)).collect()
}

/// Per-frame OSPA of `estimates` against `truth` for frames `1..=frames`.
pub fn frame_metrics(
    cfg: &Config,
    estimates: &[TrackRow],
    truth: &[TrackRow],
    frames: u32,
    run: usize,
    variant: &str,
    challenging: Option<&[bool]>,
) -> Vec<MetricRow> {
    let params = cfg.ospa_params();
    (1..=frames)
        .map(|k| {
            let x = positions(estimates.iter().filter(|r| r.frame == k));
            let y = positions(truth.iter().filter(|r| r.frame == k));
            let d = ospa(&x, &y, params);
            MetricRow {
                frame: k,
                run,
                variant: variant.to_string(),
                ospa: d.total,
                ospa_loc: d.localization,
                ospa_card: d.cardinality,
                est_card: x.len(),
                true_card: y.len(),
                challenging: challenging.is_some_and(|c| c[(k - 1) as usize]),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run: usize,
    pub seed: u64,
    pub input_checksum: String,
    /// Variants that failed numerically; the run is dropped from the aggregate.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub frames: usize,
    pub mean_ospa: f64,
    pub se_ospa: f64,
    pub mean_ospa_loc: f64,
    pub mean_ospa_card: f64,
    pub challenging_frames: usize,
    pub mean_ospa_challenging: f64,
    pub se_ospa_challenging: f64,
    /// Fraction of frames with `|estimated - true cardinality| <= 1`.
    pub cardinality_within_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub seed: u64,
    pub runs_requested: usize,
    pub runs_excluded: usize,
    pub h_max: usize,
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    pub variants: Vec<VariantSummary>,
    pub runs: Vec<RunInfo>,
}

pub struct McOutput {
    pub report: McReport,
    pub metrics: Vec<MetricRow>,
    pub tracks: Vec<TrackRow>,
    pub truth: Vec<TrackRow>,
}

fn mean_se(per_run: &[f64]) -> (f64, f64) {
    let n = per_run.len() as f64;
    if per_run.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = per_run.iter().sum::<f64>() / n;
    if per_run.len() < 2 {
        return (m, 0.0);
    }
    let var = per_run.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Aggregates metric rows per variant. Means pool all frames; standard
/// errors are taken over per-run means.
pub fn aggregate(metrics: &[MetricRow]) -> Vec<VariantSummary> {
    let mut by_variant: BTreeMap<&str, BTreeMap<usize, Vec<&MetricRow>>> = BTreeMap::new();
    for m in metrics {
        by_variant
            .entry(m.variant.as_str())
            .or_default()
            .entry(m.run)
            .or_default()
            .push(m);
    }
    by_variant
        .into_iter()
        .map(|(variant, runs)| {
            let rows: Vec<&MetricRow> = runs.values().flatten().copied().collect();
            let hard: Vec<&MetricRow> = rows.iter().copied().filter(|m| m.challenging).collect();
            let avg = |rs: &[&MetricRow], f: fn(&MetricRow) -> f64| {
                if rs.is_empty() {
                    f64::NAN
                } else {
                    rs.iter().map(|m| f(m)).sum::<f64>() / rs.len() as f64
                }
            };
            let per_run = |only_hard: bool| -> Vec<f64> {
                runs.values()
                    .filter_map(|rs| {
                        let v: Vec<f64> = rs.iter().filter(|m| !only_hard || m.challenging).map(|m| m.ospa).collect();
                        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                    })
                    .collect()
            };
            let within = rows
                .iter()
                .filter(|m| m.est_card.abs_diff(m.true_card) <= 1)
                .count();
            VariantSummary {
                variant: variant.to_string(),
                runs: runs.len(),
                frames: rows.len(),
                mean_ospa: avg(&rows, |m| m.ospa),
                se_ospa: mean_se(&per_run(false)).1,
                mean_ospa_loc: avg(&rows, |m| m.ospa_loc),
                mean_ospa_card: avg(&rows, |m| m.ospa_card),
                challenging_frames: hard.len(),
                mean_ospa_challenging: avg(&hard, |m| m.ospa),
                se_ospa_challenging: mean_se(&per_run(true)).1,
                cardinality_within_one: if rows.is_empty() {
                    f64::NAN
                } else {
                    within as f64 / rows.len() as f64
                },
            }
        })
        .collect()
}

struct RunResult {
    info: RunInfo,
    metrics: Vec<MetricRow>,
    tracks: Vec<TrackRow>,
    truth: Vec<TrackRow>,
}

fn one_run(cfg: &Config, run: usize, seed: u64, h_max: Option<usize>) -> Result<RunResult> {
    let data = simulate(cfg, seed)?;
    let truth = truth_rows(&data.truth, run);
    let frames = cfg.scenario.duration;
    let mut failures = Vec::new();
    let mut metrics = Vec::new();
    let mut tracks = Vec::new();
    for variant in Variant::ALL {
        match track(cfg, variant, &data.observations, seed, h_max) {
            Ok(out) => {
                let rows = track_rows(&out, run, variant.name());
                metrics.extend(frame_metrics(
                    cfg,
                    &rows,
                    &truth,
                    frames,
                    run,
                    variant.name(),
                    Some(&data.challenging),
                ));
                tracks.extend(rows);
            }
            Err(e) => failures.push(format!("{e}")),
        }
    }
    if !failures.is_empty() {
        // Paired comparison: drop the run for both variants.
        metrics.clear();
        tracks.clear();
    }
    Ok(RunResult {
        info: RunInfo {
            run,
            seed,
            input_checksum: format!("{:016x}", data.checksum),
            failures,
        },
        metrics,
        tracks,
        truth,
    })
}

/// Paired study: every run renders one scene and tracks it with both variants.
/// Runs execute in parallel; results are reduced in run order.
pub fn run_monte_carlo(cfg: &Config, runs: usize, seed: u64, h_max: Option<usize>) -> Result<McOutput> {
    let results: Vec<RunResult> = (0..runs)
        .into_par_iter()
        .map(|r| one_run(cfg, r, run_seed(seed, r), h_max))
        .collect::<Result<_>>()?;
    let mut metrics = Vec::new();
    let mut tracks = Vec::new();
    let mut truth = Vec::new();
    let mut infos = Vec::new();
    for r in results {
        metrics.extend(r.metrics);
        tracks.extend(r.tracks);
        truth.extend(r.truth);
        infos.push(r.info);
    }
    let report = McReport {
        seed,
        runs_requested: runs,
        runs_excluded: infos.iter().filter(|i| !i.failures.is_empty()).count(),
        h_max: h_max.unwrap_or(cfg.filter.h_max),
        ospa_cutoff: cfg.ospa.cutoff,
        ospa_order: cfg.ospa.order,
        variants: aggregate(&metrics),
        runs: infos,
    };
    Ok(McOutput {
        report,
        metrics,
        tracks,
        truth,
    })
}
