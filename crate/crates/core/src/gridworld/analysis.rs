use super::train::{policy_table, rollout_with_table};
use super::world::{Cell, Gridworld};
use crate::error::{invalid, shape_err, Result};
use crate::model::{interpolate_latents, VFuncModel};
use alloc::{format, vec, vec::Vec};
use rand::Rng;

/// Normalized state-visitation frequencies over a grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationMap {
    pub width: usize,
    pub height: usize,
    pub freq: Vec<f64>,
    pub episodes_used: usize,
}

impl VisitationMap {
    /// Normalizes raw counts; `counts` must not be all zero.
    pub fn from_counts(width: usize, height: usize, counts: &[f64], episodes_used: usize) -> Result<Self> {
        if counts.len() != width * height {
            return Err(shape_err("visitation_map", format!("{} counts for a {width}x{height} grid", counts.len())));
        }
        let total: f64 = counts.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(invalid("visitation counts are empty"));
        }
        Ok(VisitationMap { width, height, freq: counts.iter().map(|c| c / total).collect(), episodes_used })
    }

    pub fn at(&self, (r, c): Cell) -> f64 {
        self.freq[r * self.width + c]
    }

    /// Cells with positive frequency, row-major.
    pub fn support(&self) -> Vec<Cell> {
        (0..self.freq.len()).filter(|&i| self.freq[i] > 0.0).map(|i| (i / self.width, i % self.width)).collect()
    }
}

/// Visits every state of `num_episodes` episodes under a fixed `z`.
pub fn visitation_map<R: Rng + ?Sized>(
    world: &Gridworld,
    model: &VFuncModel,
    z: &[f64],
    num_episodes: usize,
    rng: &mut R,
) -> Result<VisitationMap> {
    if num_episodes == 0 {
        return Err(invalid("visitation_map needs at least one episode"));
    }
    let table = policy_table(world, model, z)?;
    let mut counts = vec![0.0; world.width * world.height];
    for _ in 0..num_episodes {
        for (r, c) in rollout_with_table(world, &table, rng)?.states {
            counts[r * world.width + c] += 1.0;
        }
    }
    VisitationMap::from_counts(world.width, world.height, &counts, num_episodes)
}

/// One map per `α`, at `α z0 + (1 − α) z1`.
pub fn interpolation_study<R: Rng + ?Sized>(
    world: &Gridworld,
    model: &VFuncModel,
    z0: &[f64],
    z1: &[f64],
    alphas: &[f64],
    num_episodes: usize,
    rng: &mut R,
) -> Result<Vec<VisitationMap>> {
    interpolate_latents(z0, z1, alphas)?
        .iter()
        .map(|z| visitation_map(world, model, z, num_episodes, rng))
        .collect()
}

pub fn total_variation(a: &VisitationMap, b: &VisitationMap) -> Result<f64> {
    if a.freq.len() != b.freq.len() {
        return Err(shape_err("total_variation", format!("{} vs {} cells", a.freq.len(), b.freq.len())));
    }
    Ok(0.5 * a.freq.iter().zip(&b.freq).map(|(p, q)| (p - q).abs()).sum::<f64>())
}

/// Mean pairwise total-variation distance.
pub fn diversity_metric(maps: &[VisitationMap]) -> Result<f64> {
    if maps.len() < 2 {
        return Err(invalid(format!("diversity needs at least 2 maps, got {}", maps.len())));
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..maps.len() {
        for j in i + 1..maps.len() {
            sum += total_variation(&maps[i], &maps[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Share of the mass on `landmarks` that falls on each landmark; all zero
/// when none of them is visited.
pub fn landmark_fractions(map: &VisitationMap, landmarks: &[Cell]) -> Vec<f64> {
    let masses: Vec<f64> = landmarks.iter().map(|&c| map.at(c)).collect();
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter().map(|m| m / total).collect()
    } else {
        vec![0.0; landmarks.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(freq: Vec<f64>) -> VisitationMap {
        VisitationMap::from_counts(2, 2, &freq, 1).unwrap()
    }

    #[test]
    fn diversity_extremes() {
        let a = map(vec![1.0, 1.0, 0.0, 0.0]);
        let b = map(vec![0.0, 0.0, 2.0, 2.0]);
        assert_eq!(diversity_metric(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert!((diversity_metric(&[a.clone(), b.clone()]).unwrap() - 1.0).abs() < 1e-12);
        assert!((diversity_metric(&[a.clone(), a.clone(), b]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(diversity_metric(&[a]).is_err());
    }

    #[test]
    fn landmark_shares() {
        let m = map(vec![1.0, 3.0, 0.0, 4.0]);
        assert_eq!(landmark_fractions(&m, &[(0, 0), (0, 1)]), vec![0.25, 0.75]);
        assert_eq!(landmark_fractions(&m, &[(1, 0)]), vec![0.0]);
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(VisitationMap::from_counts(2, 2, &[0.0; 4], 1).is_err());
        assert!(VisitationMap::from_counts(2, 2, &[1.0; 3], 1).is_err());
    }
}
