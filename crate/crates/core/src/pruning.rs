//! Structured unit pruning by the ℓ1 norm of incoming weights.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::morphonet::{LayerSpec, MorphNetwork};

/// The standard retention grid for sweeps, in percent.
pub const STANDARD_SWEEP: [f64; 9] = [100.0, 75.0, 50.0, 25.0, 10.0, 7.5, 5.0, 2.5, 1.0];

/// ℓ1 norm of each unit's incoming parameters, bias included, in unit order.
pub fn unit_scores(net: &MorphNetwork, layer: usize) -> Result<Vec<f64>> {
    if layer >= net.hidden_layers() {
        return Err(Error::invalid(format!(
            "layer {layer} is not a hidden layer (the network has {})",
            net.hidden_layers()
        )));
    }
    let blocks = net.blocks(layer);
    let l1 = |row: &[f64]| row.iter().map(|v| v.abs()).sum::<f64>();
    Ok(match net.specs()[layer] {
        LayerSpec::Linear(_) | LayerSpec::Relu(_) => {
            let (w, b) = (&blocks[0], &blocks[1]);
            (0..w.rows()).map(|u| l1(w.row(u)) + b.data()[u].abs()).collect()
        }
        _ => blocks
            .iter()
            .flat_map(|w| (0..w.rows()).map(move |u| l1(w.row(u))))
            .collect(),
    })
}

/// Number of units kept out of `width` at retention `p` percent.
pub fn retained_count(width: usize, p: f64) -> usize {
    // The slack keeps exact products such as 1% of 400 from rounding up.
    let exact = p * width as f64 / 100.0;
    ((exact - 1e-9).ceil() as usize).clamp(1, width)
}

/// Keep-mask of the `retained_count` highest scores; on equal scores the
/// lower index is kept.
pub fn top_units(scores: &[f64], p: f64) -> Vec<bool> {
    let k = retained_count(scores.len(), p);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = vec![false; scores.len()];
    for &u in &order[..k] {
        keep[u] = true;
    }
    keep
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("retention must lie in (0, 100], got {p}")))
    }
}

/// Copy of `net` whose hidden-layer masks keep the top `p` percent of units.
/// Masks are recomputed from the stored parameters, never from earlier masks.
/// Mixed layers select within the dilation and erosion halves separately.
pub fn prune(net: &MorphNetwork, p: f64) -> Result<MorphNetwork> {
    check_p(p)?;
    let mut out = net.clone();
    for layer in 0..net.hidden_layers() {
        let scores = unit_scores(net, layer)?;
        let keep = match net.specs()[layer] {
            LayerSpec::Mixed(w) => {
                let mut k = top_units(&scores[..w / 2], p);
                k.extend(top_units(&scores[w / 2..], p));
                k
            }
            _ => top_units(&scores, p),
        };
        out.set_mask(layer, keep)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneRow {
    pub model: String,
    pub optimizer: String,
    pub dataset: String,
    pub p: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub model: String,
    pub optimizer: String,
    pub rows: Vec<PruneRow>,
}

impl PruneReport {
    pub fn accuracy_at(&self, p: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.p == p).map(|r| r.accuracy)
    }
}

/// Accuracy of a fresh mask per retention level, rows in the given order.
pub fn prune_sweep(net: &MorphNetwork, ds: &Dataset, ps: &[f64], model: &str, optimizer: &str) -> Result<PruneReport> {
    if ps.is_empty() {
        return Err(Error::EmptyInput("retention list"));
    }
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let rows = ps
        .iter()
        .map(|&p| {
            Ok(PruneRow {
                model: model.to_owned(),
                optimizer: optimizer.to_owned(),
                dataset: ds.name().to_owned(),
                p,
                accuracy: prune(net, p)?.evaluate(ds)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PruneReport {
        model: model.to_owned(),
        optimizer: optimizer.to_owned(),
        rows,
    })
}
