// SPDX-License-Identifier: Apache-2.0

//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued
//! complex integrands. All components share one panel set, which suits
//! families like ∫ f(ν) e^{iντ_j} dν evaluated for many τ_j at once.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone)]
pub struct QuadOptions {
    /// Target error relative to ∫|f_c| for every component c.
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_panels: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub values: Vec<Complex64>,
    /// Achieved error bound relative to ∫|f_c|, worst component.
    pub rel_error: f64,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: Vec<Complex64>,
    err: Vec<f64>,
    l1: Vec<f64>,
    priority: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn eval_panel<F: Fn(f64, &mut [Complex64])>(
    f: &F,
    a: f64,
    b: f64,
    dim: usize,
    buf: &mut [Complex64],
) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![Complex64::new(0.0, 0.0); dim];
    let mut g = vec![Complex64::new(0.0, 0.0); dim];
    let mut l1 = vec![0.0; dim];
    let mut add = |x: f64, wk: f64, wg: f64, buf: &mut [Complex64]| {
        f(x, buf);
        for i in 0..dim {
            k[i] += buf[i] * wk;
            l1[i] += buf[i].norm() * wk;
            if wg != 0.0 {
                g[i] += buf[i] * wg;
            }
        }
    };
    add(c, WGK[7], WG[3], buf);
    for j in 0..7 {
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        add(c - h * XGK[j], WGK[j], wg, buf);
        add(c + h * XGK[j], WGK[j], wg, buf);
    }
    let mut err = vec![0.0; dim];
    for i in 0..dim {
        k[i] *= h;
        g[i] *= h;
        l1[i] *= h.abs();
        err[i] = (k[i] - g[i]).norm();
    }
    Panel {
        a,
        b,
        value: k,
        err,
        l1,
        priority: 0.0,
    }
}

/// Integrate a `dim`-component integrand over consecutive intervals given by
/// the sorted `breaks` (at least two points).
pub fn integrate<F: Fn(f64, &mut [Complex64])>(
    f: F,
    breaks: &[f64],
    dim: usize,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    assert!(breaks.len() >= 2, "need at least one interval");
    let mut buf = vec![Complex64::new(0.0, 0.0); dim];
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| eval_panel(&f, w[0], w[1], dim, &mut buf))
        .collect();

    let mut total_l1 = vec![0.0; dim];
    let mut total_err = vec![0.0; dim];
    for p in &panels {
        for i in 0..dim {
            total_l1[i] += p.l1[i];
            total_err[i] += p.err[i];
        }
    }
    let scale = |l1: &[f64]| -> Vec<f64> { l1.iter().map(|v| 1.0 / (v.max(1e-300))).collect() };
    let mut inv = scale(&total_l1);
    let prio = |p: &Panel, inv: &[f64]| -> f64 {
        p.err
            .iter()
            .zip(inv)
            .map(|(e, s)| e * s)
            .fold(0.0, f64::max)
    };
    for p in panels.iter_mut() {
        p.priority = prio(p, &inv);
    }
    let mut heap: BinaryHeap<Panel> = panels.drain(..).collect();
    let mut count = heap.len();
    let worst = |err: &[f64], inv: &[f64]| -> f64 {
        err.iter().zip(inv).map(|(e, s)| e * s).fold(0.0, f64::max)
    };
    let mut since_rescale = 0usize;
    loop {
        let w = worst(&total_err, &inv);
        if w <= opts.rel_tol {
            break;
        }
        if count >= opts.max_panels {
            return Err(Error::NonConvergence {
                what: "adaptive quadrature",
                residual: w,
            });
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // Interval exhausted at machine precision; keep its estimate.
            let mut p = p;
            for i in 0..dim {
                total_err[i] -= p.err[i];
                p.err[i] = 0.0;
            }
            p.priority = -1.0;
            heap.push(p);
            continue;
        }
        let mut left = eval_panel(&f, p.a, mid, dim, &mut buf);
        let mut right = eval_panel(&f, mid, p.b, dim, &mut buf);
        for i in 0..dim {
            total_err[i] += left.err[i] + right.err[i] - p.err[i];
            total_l1[i] += left.l1[i] + right.l1[i] - p.l1[i];
        }
        since_rescale += 1;
        if since_rescale >= 64 {
            since_rescale = 0;
            inv = scale(&total_l1);
            let mut all: Vec<Panel> = heap.drain().collect();
            for q in all.iter_mut() {
                if q.priority >= 0.0 {
                    q.priority = prio(q, &inv);
                }
            }
            heap = all.into_iter().collect();
        }
        left.priority = prio(&left, &inv);
        right.priority = prio(&right, &inv);
        heap.push(left);
        heap.push(right);
        count += 1;
    }
    // Sum from scratch in interval order for reproducible rounding.
    let mut all: Vec<Panel> = heap.into_vec();
    all.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut values = vec![Complex64::new(0.0, 0.0); dim];
    let mut err = vec![0.0; dim];
    let mut l1 = vec![0.0; dim];
    for p in &all {
        for i in 0..dim {
            values[i] += p.value[i];
            err[i] += p.err[i];
            l1[i] += p.l1[i];
        }
    }
    let rel_error = err
        .iter()
        .zip(&l1)
        .map(|(e, s)| e / s.max(1e-300))
        .fold(0.0, f64::max);
    Ok(QuadResult {
        values,
        rel_error,
        panels: all.len(),
    })
}
