//! Sequential minimal optimization for the soft-margin SVM dual with
//! per-sample box bounds:
//!
//! maximize  Σαᵢ − ½ ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ   s.t.  0 ≤ αᵢ ≤ Cᵢ,  Σαᵢyᵢ = 0.
//!
//! The decision function is f(x) = Σ αᵢyᵢK(xᵢ, x) + b.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense row-major kernel matrix.
#[derive(Debug, Clone)]
pub struct Gram {
    pub n: usize,
    pub values: Vec<f64>,
}

impl Gram {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Gram { n, values }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    /// Width of the violated bias interval at exit; ≤ tol means converged.
    pub gap: f64,
}

struct State<'a> {
    k: &'a Gram,
    y: &'a [f64],
    c: &'a [f64],
    alpha: Vec<f64>,
    /// gᵢ = Σⱼ αⱼyⱼKᵢⱼ
    g: Vec<f64>,
    b: f64,
    tol: f64,
    steps: usize,
    rng: ChaCha8Rng,
}

const EPS: f64 = 1e-12;

impl State<'_> {
    fn err(&self, i: usize) -> f64 {
        self.g[i] + self.b - self.y[i]
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c[i]
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (c1, c2) = (self.c[i1], self.c[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2 - a1).max(0.0), c2.min(c1 + a2 - a1))
        } else {
            ((a1 + a2 - c1).max(0.0), c2.min(a1 + a2))
        };
        if hi - lo < EPS {
            return false;
        }
        let e1 = self.err(i1);
        let e2 = self.err(i2);
        let (k11, k12, k22) = (self.k.get(i1, i1), self.k.get(i1, i2), self.k.get(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        // ΔW(δ) = δ·y₂(E₁ − E₂) − ½ηδ² along the feasible line
        let gain = |d: f64| d * y2 * (e1 - e2) - 0.5 * eta * d * d;
        let mut a2n = if eta > EPS {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            let (gl, gh) = (gain(lo - a2), gain(hi - a2));
            if gl > gh + EPS {
                lo
            } else if gh > gl + EPS {
                hi
            } else {
                return false;
            }
        };
        if a2n < EPS * c2 {
            a2n = 0.0;
        } else if a2n > c2 * (1.0 - EPS) {
            a2n = c2;
        }
        if (a2n - a2).abs() < EPS * (a2 + a2n + EPS) {
            return false;
        }
        let mut a1n = (a1 + s * (a2 - a2n)).clamp(0.0, c1);
        if a1n < EPS * c1 {
            a1n = 0.0;
        } else if a1n > c1 * (1.0 - EPS) {
            a1n = c1;
        }
        let (d1, d2) = (y1 * (a1n - a1), y2 * (a2n - a2));
        for i in 0..self.k.n {
            self.g[i] += d1 * self.k.get(i1, i) + d2 * self.k.get(i2, i);
        }
        self.alpha[i1] = a1n;
        self.alpha[i2] = a2n;
        let b1 = y1 - self.g[i1];
        let b2 = y2 - self.g[i2];
        self.b = if self.is_free(i1) {
            b1
        } else if self.is_free(i2) {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        self.steps += 1;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let n = self.k.n;
        let r2 = self.err(i2) * self.y[i2];
        let a2 = self.alpha[i2];
        if !((r2 < -self.tol && a2 < self.c[i2]) || (r2 > self.tol && a2 > 0.0)) {
            return false;
        }
        let e2 = self.err(i2);
        let free: Vec<usize> = (0..n).filter(|&i| self.is_free(i)).collect();
        if free.len() > 1 {
            let mut best = None;
            let mut best_d = -1.0;
            for &i in &free {
                let d = (self.err(i) - e2).abs();
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        if !free.is_empty() {
            let start = self.rng.gen_range(0..free.len());
            for off in 0..free.len() {
                if self.take_step(free[(start + off) % free.len()], i2) {
                    return true;
                }
            }
        }
        let start = self.rng.gen_range(0..n);
        for off in 0..n {
            if self.take_step((start + off) % n, i2) {
                return true;
            }
        }
        false
    }

    /// Bias interval implied by KKT: b must be ≥ every lower bound and ≤
    /// every upper bound. Returns (argmax lower, max lower, argmin upper,
    /// min upper).
    fn bias_bounds(&self) -> (Option<usize>, f64, Option<usize>, f64) {
        let (mut li, mut lv, mut ui, mut uv) = (None, f64::NEG_INFINITY, None, f64::INFINITY);
        for i in 0..self.k.n {
            let u = self.y[i] - self.g[i];
            let (pos, a, c) = (self.y[i] > 0.0, self.alpha[i], self.c[i]);
            let lower = (pos && a < c) || (!pos && a > 0.0);
            let upper = (pos && a > 0.0) || (!pos && a < c);
            if lower && u > lv {
                lv = u;
                li = Some(i);
            }
            if upper && u < uv {
                uv = u;
                ui = Some(i);
            }
        }
        (li, lv, ui, uv)
    }
}

/// Solves the dual to KKT tolerance `tol`.
///
/// Platt's two-loop heuristic runs first; a maximal-violating-pair pass then
/// closes any remaining gap. The returned bias is the midpoint of the KKT
/// interval, so every condition holds within `gap / 2`.
pub fn solve(k: &Gram, y: &[f64], c: &[f64], tol: f64, max_steps: usize, seed: u64) -> Solution {
    let n = k.n;
    assert_eq!(y.len(), n);
    assert_eq!(c.len(), n);
    let mut st = State {
        k,
        y,
        c,
        alpha: vec![0.0; n],
        g: vec![0.0; n],
        b: 0.0,
        tol,
        steps: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    if n == 0 {
        return Solution { alpha: vec![], b: 0.0, iterations: 0, gap: 0.0 };
    }
    let mut examine_all = true;
    let mut changed = 0usize;
    while (changed > 0 || examine_all) && st.steps < max_steps {
        changed = 0;
        let offset = st.rng.gen_range(0..n);
        for j in 0..n {
            let i = (offset + j) % n;
            if (examine_all || st.is_free(i)) && st.examine(i) {
                changed += 1;
            }
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    let mut gap;
    loop {
        let (li, lv, ui, uv) = st.bias_bounds();
        gap = (lv - uv).max(0.0);
        if gap <= tol || st.steps >= max_steps {
            break;
        }
        let (Some(i), Some(j)) = (li, ui) else { break };
        if !st.take_step(i, j) {
            break;
        }
    }
    let (_, lv, _, uv) = st.bias_bounds();
    let b = match (lv.is_finite(), uv.is_finite()) {
        (true, true) => 0.5 * (lv + uv),
        (true, false) => lv,
        (false, true) => uv,
        (false, false) => 0.0,
    };
    Solution {
        alpha: st.alpha,
        b,
        iterations: st.steps,
        gap,
    }
}

pub fn dual_objective(k: &Gram, y: &[f64], alpha: &[f64]) -> f64 {
    let n = k.n;
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Largest KKT violation of `sol` measured on yᵢf(xᵢ).
pub fn kkt_violation(k: &Gram, y: &[f64], c: &[f64], sol: &Solution) -> f64 {
    let n = k.n;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| sol.alpha[j] * y[j] * k.get(i, j)).sum::<f64>() + sol.b;
        let m = y[i] * f;
        let a = sol.alpha[i];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= c[i] {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
