//! Seeded random grids, kernels and extremal Gronwall instances.

use std::sync::Arc;

use rand::Rng;

use crate::grid::{GridFunction, ProductDomain};
use crate::inequalities::Kernels;
use crate::timescale::TimeScale;

/// A scale with `2..=max_len` points and steps drawn from `[0.1, 1.0)`.
pub fn random_scale<R: Rng>(rng: &mut R, max_len: usize) -> TimeScale {
    let n = rng.gen_range(2..=max_len.max(2));
    let mut t = rng.gen_range(-1.0..1.0);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(t);
        t += rng.gen_range(0.1..1.0);
    }
    TimeScale::new(pts).expect("strictly increasing by construction")
}

/// A scale whose points and steps are small dyadic rationals, so sums and
/// differences of dyadic samples are exact in `f64`.
pub fn random_dyadic_scale<R: Rng>(rng: &mut R, max_len: usize) -> TimeScale {
    const STEPS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
    let n = rng.gen_range(2..=max_len.max(2));
    let mut t = rng.gen_range(-8i32..=8) as f64 / 4.0;
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(t);
        t += STEPS[rng.gen_range(0..STEPS.len())];
    }
    TimeScale::new(pts).expect("strictly increasing by construction")
}

pub fn random_domain<R: Rng>(rng: &mut R, max: (usize, usize, usize)) -> Arc<ProductDomain> {
    let t1 = random_scale(rng, max.0);
    let t2 = random_scale(rng, max.1);
    let z = random_scale(rng, max.2);
    Arc::new(ProductDomain::new(t1, t2, z).expect("every axis has two points"))
}

pub fn random_dyadic_domain<R: Rng>(rng: &mut R, max: (usize, usize, usize)) -> Arc<ProductDomain> {
    let t1 = random_dyadic_scale(rng, max.0);
    let t2 = random_dyadic_scale(rng, max.1);
    let z = random_dyadic_scale(rng, max.2);
    Arc::new(ProductDomain::new(t1, t2, z).expect("every axis has two points"))
}

/// Values `k/4` with `|k| <= 32`.
pub fn random_dyadic_function<R: Rng>(rng: &mut R, d: &Arc<ProductDomain>) -> GridFunction {
    let values = (0..d.len()).map(|_| rng.gen_range(-32i32..=32) as f64 / 4.0).collect();
    GridFunction::new(d.clone(), values).expect("length matches")
}

/// Kernels with every entry drawn from `[0, 2)`.
pub fn random_kernels<R: Rng>(rng: &mut R, d: &Arc<ProductDomain>) -> Kernels {
    let n3 = d.z().len();
    let p = (0..d.len()).map(|_| rng.gen_range(0.0..2.0)).collect();
    let r = (0..d.len() * n3).map(|_| rng.gen_range(0.0..2.0)).collect();
    Kernels::new(GridFunction::new(d.clone(), p).expect("length matches"), r)
        .expect("nonnegative by construction")
}

/// The function that satisfies the integral premise with equality:
/// `w = c + Σ_{s<x} Σ_{t<y} μ₁ μ₂ [p w + Σ_q μ₃ r w(·,·,q)]`, filled in
/// increasing `x`.
pub fn equality_solution(kernels: &Kernels, c: f64) -> GridFunction {
    let d = kernels.domain().clone();
    let (n1, n2, n3) = d.shape();
    let mut w = vec![0.0; d.len()];
    let mut m = vec![0.0; d.len()];
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let mut acc = c;
                for s in 0..i {
                    for t in 0..j {
                        acc += d.t1().mu_at(s) * d.t2().mu_at(t) * m[d.index(s, t, k)];
                    }
                }
                w[d.index(i, j, k)] = acc;
            }
        }
        for j in 0..n2 {
            for k in 0..n3 {
                let mut coupled = 0.0;
                for q in 0..n3 {
                    coupled += d.z().mu_at(q) * kernels.r(i, j, k, q) * w[d.index(i, j, q)];
                }
                m[d.index(i, j, k)] = kernels.p().get(i, j, k) * w[d.index(i, j, k)] + coupled;
            }
        }
    }
    GridFunction::new(d, w).expect("length matches")
}

pub struct GronwallInstance {
    pub kernels: Kernels,
    pub c: f64,
    pub w: GridFunction,
}

/// Random kernels in `[0, 2)`, `c` in `[0, 5)`, and `w` from
/// [`equality_solution`].
pub fn gronwall_instance<R: Rng>(rng: &mut R, max: (usize, usize, usize)) -> GronwallInstance {
    let d = random_domain(rng, max);
    let kernels = random_kernels(rng, &d);
    let c = rng.gen_range(0.0..5.0);
    let w = equality_solution(&kernels, c);
    GronwallInstance { kernels, c, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::gronwall_premise_rhs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equality_solution_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let inst = gronwall_instance(&mut rng, (6, 6, 3));
            let rhs = gronwall_premise_rhs(&inst.w, &inst.kernels, inst.c).unwrap();
            for (a, b) in inst.w.values().iter().zip(rhs.values()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn seeded_generation_repeats() {
        let a = random_domain(&mut ChaCha8Rng::seed_from_u64(3), (8, 8, 4));
        let b = random_domain(&mut ChaCha8Rng::seed_from_u64(3), (8, 8, 4));
        assert_eq!(a, b);
    }
}
