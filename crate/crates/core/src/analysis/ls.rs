//! Least-squares direction finding over the pattern-table grid.
//!
//! With `R(t, r)` the measured RSSI of the PAC (TX beam t, RX beam r) and
//! `A_t`, `B_r` the TX and RX gains toward a candidate direction, the
//! residual variance splits exactly:
//!
//! ```text
//! var(R - A - B) = var_t(u - A) + var_r(v - B) + mean(γ²)
//! ```
//!
//! where `u`, `v` are the row and column means of `R` and `γ` is its
//! double-centred interaction term. Each side is therefore searched on its
//! own grid and the joint optimum is the pair of per-side optima.

use serde::{Deserialize, Serialize};

use crate::array::{AoaAodPair, ArrayTables, PatternTable};
use crate::error::{Error, Result};

/// Knobs for the direction finder.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LsOptions {
    /// Only PACs strictly above this level enter the variance. The masked
    /// objective no longer separates, so it is minimised by alternating
    /// exact per-side searches, started both from the unmasked optimum and
    /// from the main-lobe peaks of the strongest PAC; the lower variance wins.
    pub mask_below_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub delay_bin: usize,
    pub rssi_vector: Vec<f64>,
    pub omega_hat: AoaAodPair,
    pub rssi0_dbm: f64,
    pub residual_var_db2: f64,
}

impl PathEstimate {
    /// PAC with the highest measured RSSI.
    pub fn best_pac(&self) -> usize {
        let mut best = 0;
        for (n, v) in self.rssi_vector.iter().enumerate() {
            if *v > self.rssi_vector[best] {
                best = n;
            }
        }
        best
    }
}

/// One array's grid, transposed to node-major for the search.
#[derive(Debug, Clone)]
struct SideGrid {
    beams: usize,
    /// `[node][beam]`.
    gains: Vec<f64>,
    angles: Vec<(f64, f64)>,
}

impl SideGrid {
    fn new(t: &PatternTable) -> Self {
        let (beams, nodes) = (t.beams(), t.nodes());
        let mut gains = Vec::with_capacity(beams * nodes);
        for node in 0..nodes {
            for c in 0..beams {
                gains.push(t.node_gain(c, node));
            }
        }
        Self {
            beams,
            gains,
            angles: (0..nodes).map(|k| t.node_angles(k)).collect(),
        }
    }

    /// Grid node where beam `c` peaks.
    fn peak_node(&self, c: usize) -> usize {
        let mut best = 0;
        for k in 0..self.angles.len() {
            if self.node(k)[c] > self.node(best)[c] {
                best = k;
            }
        }
        best
    }

    fn node(&self, k: usize) -> &[f64] {
        &self.gains[k * self.beams..(k + 1) * self.beams]
    }

    /// Grid node minimising `cost`, ties resolved toward boresight and
    /// then toward the lower index.
    fn argmin(&self, mut cost: impl FnMut(&[f64]) -> f64) -> usize {
        let mut best = (f64::INFINITY, f64::INFINITY, 0usize);
        for k in 0..self.angles.len() {
            let f = cost(self.node(k));
            let tol = 1e-10 + 1e-9 * f.abs();
            let (a, e) = self.angles[k];
            let d2 = a * a + e * e;
            if f < best.0 - tol || ((f - best.0).abs() <= tol && d2 < best.1) {
                best = (f, d2, k);
            }
        }
        best.2
    }
}

fn variance_of_diff(u: &[f64], g: &[f64]) -> f64 {
    let n = u.len() as f64;
    let (mut s, mut ss) = (0.0, 0.0);
    for (a, b) in u.iter().zip(g) {
        let d = a - b;
        s += d;
        ss += d * d;
    }
    let m = s / n;
    (ss / n - m * m).max(0.0)
}

/// Reusable exhaustive searcher for one pair of pattern tables.
#[derive(Debug, Clone)]
pub struct LsSolver {
    tx: SideGrid,
    rx: SideGrid,
}

impl LsSolver {
    pub fn new(tables: &ArrayTables) -> Self {
        Self {
            tx: SideGrid::new(&tables.tx),
            rx: SideGrid::new(&tables.rx),
        }
    }

    fn n_dir(&self) -> usize {
        self.tx.beams * self.rx.beams
    }

    fn check(&self, rssi: &[f64]) -> Result<()> {
        if rssi.len() != self.n_dir() {
            return Err(Error::LengthMismatch(rssi.len(), self.n_dir()));
        }
        if rssi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor("non-finite RSSI".into()));
        }
        Ok(())
    }

    fn omega(&self, tx_node: usize, rx_node: usize) -> AoaAodPair {
        let (pt, tt) = self.tx.angles[tx_node];
        let (pr, tr) = self.rx.angles[rx_node];
        AoaAodPair::new(pt, pr, tt, tr)
    }

    /// Unmasked optimum as `(tx_node, rx_node)`.
    fn solve_full(&self, rssi: &[f64]) -> (usize, usize) {
        let (nt, nr) = (self.tx.beams, self.rx.beams);
        let mut u = vec![0.0; nt];
        let mut v = vec![0.0; nr];
        for t in 0..nt {
            for r in 0..nr {
                let x = rssi[t * nr + r];
                u[t] += x / nr as f64;
                v[r] += x / nt as f64;
            }
        }
        let a = self.tx.argmin(|g| variance_of_diff(&u, g));
        let b = self.rx.argmin(|g| variance_of_diff(&v, g));
        (a, b)
    }

    /// Best node on one side with the other side's gains held fixed,
    /// restricted to masked entries. `rows` index the searched side.
    fn masked_side(side: &SideGrid, rows: usize, cols: usize, y: impl Fn(usize, usize) -> Option<f64>) -> usize {
        let (mut cnt, mut sy, mut syy) = (vec![0.0; rows], vec![0.0; rows], vec![0.0; rows]);
        for i in 0..rows {
            for k in 0..cols {
                if let Some(val) = y(i, k) {
                    cnt[i] += 1.0;
                    sy[i] += val;
                    syy[i] += val * val;
                }
            }
        }
        let total: f64 = cnt.iter().sum();
        side.argmin(|g| {
            let (mut s, mut ss) = (0.0, 0.0);
            for i in 0..rows {
                s += sy[i] - cnt[i] * g[i];
                ss += syy[i] - 2.0 * g[i] * sy[i] + cnt[i] * g[i] * g[i];
            }
            let m = s / total;
            ss / total - m * m
        })
    }

    fn masked_var(&self, rssi: &[f64], keep: &[bool], a: usize, b: usize) -> f64 {
        let (ga, gb, nr) = (self.tx.node(a), self.rx.node(b), self.rx.beams);
        let (mut c, mut s, mut ss) = (0.0, 0.0, 0.0);
        for (n, x) in rssi.iter().enumerate().filter(|(n, _)| keep[*n]) {
            let e = x - ga[n / nr] - gb[n % nr];
            c += 1.0;
            s += e;
            ss += e * e;
        }
        let m = s / c;
        ss / c - m * m
    }

    fn solve_masked(&self, rssi: &[f64], keep: &[bool]) -> (usize, usize) {
        let nr = self.rx.beams;
        let mut strongest = 0;
        for (n, v) in rssi.iter().enumerate() {
            if *v > rssi[strongest] {
                strongest = n;
            }
        }
        let starts = [
            self.solve_full(rssi),
            (self.tx.peak_node(strongest / nr), self.rx.peak_node(strongest % nr)),
        ];
        let mut best: Option<((usize, usize), f64)> = None;
        for start in starts {
            let ab = self.alternate(rssi, keep, start);
            let v = self.masked_var(rssi, keep, ab.0, ab.1);
            if best.is_none_or(|(_, bv)| v < bv - 1e-12) {
                best = Some((ab, v));
            }
        }
        best.map(|b| b.0).unwrap_or_default()
    }

    fn alternate(&self, rssi: &[f64], keep: &[bool], start: (usize, usize)) -> (usize, usize) {
        let (nt, nr) = (self.tx.beams, self.rx.beams);
        let (mut a, mut b) = start;
        for _ in 0..50 {
            let gb = self.rx.node(b);
            let a_new = Self::masked_side(&self.tx, nt, nr, |t, r| {
                keep[t * nr + r].then(|| rssi[t * nr + r] - gb[r])
            });
            let ga = self.tx.node(a_new);
            let b_new = Self::masked_side(&self.rx, nr, nt, |r, t| {
                keep[t * nr + r].then(|| rssi[t * nr + r] - ga[t])
            });
            let done = a_new == a && b_new == b;
            (a, b) = (a_new, b_new);
            if done {
                break;
            }
        }
        (a, b)
    }

    pub fn solve(&self, rssi: &[f64], delay_bin: usize, opts: &LsOptions) -> Result<PathEstimate> {
        self.check(rssi)?;
        let keep: Vec<bool> = match opts.mask_below_dbm {
            Some(level) => rssi.iter().map(|v| *v > level).collect(),
            None => vec![true; rssi.len()],
        };
        let kept = keep.iter().filter(|k| **k).count();
        let (a, b) = if kept == rssi.len() || kept < 2 {
            self.solve_full(rssi)
        } else {
            self.solve_masked(rssi, &keep)
        };
        let (ga, gb) = (self.tx.node(a), self.rx.node(b));
        let nr = self.rx.beams;
        let resid: Vec<f64> = rssi
            .iter()
            .enumerate()
            .zip(&keep)
            .filter(|(_, k)| **k || kept < 2)
            .map(|((n, x), _)| x - ga[n / nr] - gb[n % nr])
            .collect();
        let m = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / resid.len() as f64;
        Ok(PathEstimate {
            delay_bin,
            rssi_vector: rssi.to_vec(),
            omega_hat: self.omega(a, b),
            rssi0_dbm: m,
            residual_var_db2: var,
        })
    }
}

/// `ω̂ = argmin_ω var_n(rssi(n) − G(n, ω))` over the full grid, with
/// `RSSI_0` the mean residual at `ω̂`.
pub fn ls_direction_find(rssi: &[f64], tables: &ArrayTables, delay_bin: usize) -> Result<PathEstimate> {
    LsSolver::new(tables).solve(rssi, delay_bin, &LsOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{synth_codebook, CodebookParams, PatternTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_tables() -> ArrayTables {
        let p = CodebookParams {
            beams: 4,
            steering_span_deg: 60.0,
            az_limit_deg: 30.0,
            el_limit_deg: 20.0,
            grid_step_deg: 10.0,
            ..CodebookParams::default()
        };
        let t = synth_codebook(&p).unwrap();
        let q = CodebookParams { beams: 3, ..p };
        ArrayTables::new(t, synth_codebook(&q).unwrap())
    }

    fn brute_force(rssi: &[f64], tables: &ArrayTables) -> (AoaAodPair, f64) {
        let mut best = (AoaAodPair::default(), f64::INFINITY);
        for kt in 0..tables.tx.nodes() {
            for kr in 0..tables.rx.nodes() {
                let (pt, tt) = tables.tx.node_angles(kt);
                let (pr, tr) = tables.rx.node_angles(kr);
                let w = AoaAodPair::new(pt, pr, tt, tr);
                let g = tables.gain_vector(&w).unwrap();
                let e: Vec<f64> = rssi.iter().zip(&g).map(|(a, b)| a - b).collect();
                let m = e.iter().sum::<f64>() / e.len() as f64;
                let v = e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / e.len() as f64;
                if v < best.1 {
                    best = (w, v);
                }
            }
        }
        best
    }

    #[test]
    fn decomposition_matches_brute_force() {
        let tables = small_tables();
        let solver = LsSolver::new(&tables);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rssi: Vec<f64> = (0..tables.n_dir()).map(|_| rng.random_range(-80.0..-40.0)).collect();
            let est = solver.solve(&rssi, 0, &LsOptions::default()).unwrap();
            let (w, v) = brute_force(&rssi, &tables);
            assert_eq!(est.omega_hat, w);
            assert!((est.residual_var_db2 - v).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_model_recovered() {
        let t = synth_codebook(&CodebookParams::default()).unwrap();
        let tables = ArrayTables::new(t.clone(), t);
        let w = AoaAodPair::new(-24.0, 36.0, -14.0, 8.0);
        let rssi: Vec<f64> = tables.gain_vector(&w).unwrap().iter().map(|g| g - 50.0).collect();
        let est = ls_direction_find(&rssi, &tables, 7).unwrap();
        assert_eq!(est.omega_hat, w);
        assert_eq!(est.delay_bin, 7);
        assert!(est.residual_var_db2 < 1e-18);
        assert!((est.rssi0_dbm + 50.0).abs() < 1e-9);

        let shifted: Vec<f64> = rssi.iter().map(|v| v + 7.5).collect();
        let est2 = ls_direction_find(&shifted, &tables, 7).unwrap();
        assert_eq!(est2.omega_hat, w);
        assert!((est2.rssi0_dbm + 42.5).abs() < 1e-9);
    }

    #[test]
    fn flat_input_ties_break_to_boresight() {
        let flat = PatternTable::constant(vec![-10.0, 0.0, 10.0], vec![-10.0, 0.0, 10.0], 2, 5.0).unwrap();
        let tables = ArrayTables::new(flat.clone(), flat);
        let est = ls_direction_find(&[-60.0; 4], &tables, 0).unwrap();
        assert_eq!(est.omega_hat, AoaAodPair::default());
        assert!((est.rssi0_dbm + 70.0).abs() < 1e-12);
    }

    #[test]
    fn masked_variant_ignores_floor_clipped_pacs() {
        let t = synth_codebook(&CodebookParams::default()).unwrap();
        let tables = ArrayTables::new(t.clone(), t);
        let w = AoaAodPair::new(30.0, -10.0, 4.0, -6.0);
        let floor = -80.0;
        let rssi: Vec<f64> = tables
            .gain_vector(&w)
            .unwrap()
            .iter()
            .map(|g| (g - 75.0).max(floor))
            .collect();
        let est = LsSolver::new(&tables)
            .solve(
                &rssi,
                0,
                &LsOptions {
                    mask_below_dbm: Some(floor + 0.5),
                },
            )
            .unwrap();
        assert_eq!(est.omega_hat, w);
        assert!(est.residual_var_db2 < 1e-12);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let tables = small_tables();
        assert!(matches!(
            ls_direction_find(&[0.0; 3], &tables, 0),
            Err(Error::LengthMismatch(3, 12))
        ));
    }
}
