//! The per-component score table feeding the Gibbs sampler.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::density::{GlmbComponent, Track};
use crate::error::Result;
use crate::gaussian::{predict, GaussianDensity};
use crate::label::TrackLabel;
use crate::models::hybrid_phi;

use super::FrameContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Existing,
    Birth,
}

/// Scores of one label against every association choice.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaRow {
    pub label: TrackLabel,
    pub kind: RowKind,
    /// `log η(j)` for `j = -1, 0, 1, …, M`, stored at index `j + 1`.
    pub log_eta: Vec<f64>,
    /// Updated density for `j = 0, …, M` (index `j`); `None` where the
    /// update failed or the score is zero.
    pub posteriors: Vec<Option<GaussianDensity>>,
    /// Set when an inner numeric failure forced entries to `-∞`.
    pub failed: bool,
}

impl EtaRow {
    pub fn eta(&self, j: i32) -> f64 {
        self.log_eta[(j + 1) as usize]
    }
}

/// Rows for `I⁽ʰ⁾` (canonical label order) followed by the births.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaTable {
    rows: Vec<Arc<EtaRow>>,
    detections: usize,
}

impl EtaTable {
    pub fn from_rows(rows: Vec<Arc<EtaRow>>, detections: usize) -> Self {
        debug_assert!(rows.iter().all(|r| r.log_eta.len() == detections + 2));
        Self { rows, detections }
    }

    pub fn rows(&self) -> &[Arc<EtaRow>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// `M`, the number of detections.
    pub fn n_detections(&self) -> usize {
        self.detections
    }

    pub fn log_eta(&self, row: usize, j: i32) -> f64 {
        self.rows[row].eta(j)
    }

    /// `Σ_i log η_i(γ_i)`.
    pub fn log_score(&self, gamma: &[i32]) -> f64 {
        gamma
            .iter()
            .enumerate()
            .map(|(i, &j)| self.log_eta(i, j))
            .sum()
    }

    /// Tracks of the hypothesis encoded by `gamma` (`γ_i ≥ 0` survives or is born).
    pub fn hypothesis_tracks(&self, gamma: &[i32]) -> Option<Vec<Track>> {
        let mut tracks = Vec::new();
        for (row, &j) in self.rows.iter().zip(gamma) {
            if j < 0 {
                continue;
            }
            let density = row.posteriors[j as usize].clone()?;
            let association = if j == 0 {
                crate::density::Association::Missed
            } else {
                crate::density::Association::Detection((j - 1) as u32)
            };
            tracks.push(Track {
                label: row.label,
                density,
                association,
            });
        }
        Some(tracks)
    }
}

type RowKey = (TrackLabel, [u64; 14]);

/// Memoises rows of existing tracks across components that share a density.
#[derive(Debug, Default)]
pub struct RowCache {
    rows: BTreeMap<RowKey, Arc<EtaRow>>,
    births: Option<Vec<Arc<EtaRow>>>,
}

impl RowCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows built so far that hit a numeric failure.
    pub fn failed_rows(&self) -> usize {
        let births = self.births.iter().flatten().filter(|r| r.failed).count();
        self.rows.values().filter(|r| r.failed).count() + births
    }
}

fn log_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        libm::log(p)
    } else {
        f64::NEG_INFINITY
    }
}

/// Fills the `j ≥ 0` entries of a row from a predicted density scaled by
/// `log_scale` (survival or birth probability).
fn fill_row(
    label: TrackLabel,
    kind: RowKind,
    log_death: f64,
    log_scale: f64,
    predicted: Result<GaussianDensity>,
    ctx: &FrameContext<'_>,
) -> EtaRow {
    let m = ctx.observation.detections.len();
    let mut log_eta = alloc::vec![f64::NEG_INFINITY; m + 2];
    let mut posteriors = alloc::vec![None; m + 1];
    log_eta[0] = log_death;
    let mut failed = false;
    match predicted {
        Ok(pred) if log_scale > f64::NEG_INFINITY => {
            let template = ctx.template_for(label);
            for j in 0..=m {
                match hybrid_phi(
                    j,
                    &pred,
                    ctx.observation,
                    &ctx.models.sensor,
                    template,
                    &ctx.models.ut,
                ) {
                    Ok((log_phi, post)) => {
                        let v = log_scale + log_phi;
                        if v > f64::NEG_INFINITY {
                            log_eta[j + 1] = v;
                            posteriors[j] = Some(post);
                        }
                    }
                    Err(_) => failed = true,
                }
            }
        }
        Ok(_) => {}
        Err(_) => failed = true,
    }
    if log_eta.iter().all(|&v| v == f64::NEG_INFINITY) {
        // Nothing is feasible: the label can only be absent.
        log_eta[0] = 0.0;
        failed = true;
    }
    EtaRow {
        label,
        kind,
        log_eta,
        posteriors,
        failed,
    }
}

/// Row for a track that exists in the current component.
pub fn existing_row(track: &Track, ctx: &FrameContext<'_>) -> EtaRow {
    let models = ctx.models;
    let ps = models
        .survival
        .survival_probability(&track.density, track.label, ctx.frame.saturating_sub(1))
        .clamp(0.0, 1.0);
    let predicted = predict(
        &track.density,
        models.motion.transition(),
        models.motion.noise(),
        models.cov_cap,
    );
    fill_row(
        track.label,
        RowKind::Existing,
        log_or_neg_inf(1.0 - ps),
        log_or_neg_inf(ps),
        predicted,
        ctx,
    )
}

/// Rows for the frame's birth components.
pub fn birth_rows(ctx: &FrameContext<'_>) -> Vec<Arc<EtaRow>> {
    ctx.births
        .iter()
        .map(|b| {
            Arc::new(fill_row(
                b.label,
                RowKind::Birth,
                log_or_neg_inf(1.0 - b.existence),
                log_or_neg_inf(b.existence),
                Ok(b.density.clone()),
                ctx,
            ))
        })
        .collect()
}

/// Builds `η⁽ʰ⁾` for one component: survivor rows then birth rows.
pub fn build_eta(component: &GlmbComponent, ctx: &FrameContext<'_>, cache: &mut RowCache) -> EtaTable {
    let mut rows = Vec::with_capacity(component.cardinality() + ctx.births.len());
    for track in component.tracks() {
        let key = (track.label, track.density.bit_key());
        let row = cache
            .rows
            .entry(key)
            .or_insert_with(|| Arc::new(existing_row(track, ctx)))
            .clone();
        rows.push(row);
    }
    let births = cache.births.get_or_insert_with(|| birth_rows(ctx));
    rows.extend(births.iter().cloned());
    EtaTable::from_rows(rows, ctx.observation.detections.len())
}
