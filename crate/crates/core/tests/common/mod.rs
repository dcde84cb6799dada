//! Independent oracles and random generators shared by the integration
//! tests. Nothing here calls into the crate's linear algebra.

#![allow(dead_code)]

use histories::{Alphabet, ComplexMatrix, DensityMatrix, Instrument, Projection, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<C64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(n: usize) -> Dense {
    vec![vec![c(0.0); n]; n]
}

pub fn eye(n: usize) -> Dense {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(1.0);
    }
    m
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn adjoint(a: &Dense) -> Dense {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i].conj()).collect()).collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

pub fn scale(a: &Dense, s: C64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

pub fn trace(a: &Dense) -> C64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

pub fn max_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn to_dense(m: &ComplexMatrix) -> Dense {
    let n = m.dim();
    (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect()
}

pub fn from_dense(d: &Dense) -> ComplexMatrix {
    ComplexMatrix::from_rows(d).unwrap()
}

/// Random unitary from Gram–Schmidt on uniformly random complex columns.
pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Dense {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// `U diag(values) U*`.
pub fn conjugate_diagonal(u: &Dense, values: &[f64]) -> Dense {
    let n = u.len();
    let mut d = zeros(n);
    for i in 0..n {
        d[i][i] = c(values[i]);
    }
    matmul(&matmul(u, &d), &adjoint(u))
}

/// A random full-rank density matrix.
pub fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let u = random_unitary(n, rng);
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    DensityMatrix::new(from_dense(&conjugate_diagonal(&u, &p)).hermitian_part()).unwrap()
}

fn alphabet(k: usize) -> Alphabet {
    Alphabet::new((0..k).map(|i| format!("s{i}")).collect()).unwrap()
}

/// An instrument diagonal in the columns of `u`: basis vector `i` belongs to
/// symbol `assign[i]`.
pub fn instrument_in_basis(u: &Dense, assign: &[usize], k: usize) -> Instrument {
    let projections = (0..k)
        .map(|s| {
            let diag: Vec<f64> = assign.iter().map(|&a| if a == s { 1.0 } else { 0.0 }).collect();
            Projection::new(from_dense(&conjugate_diagonal(u, &diag)).hermitian_part()).unwrap()
        })
        .collect();
    Instrument::new(alphabet(k), projections).unwrap()
}

fn random_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut assign: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        assign.swap(i, j);
    }
    assign
}

/// `steps` instruments with `k ≤ n` outcomes, all diagonal in one random
/// basis, hence commuting and ideally decohering.
pub fn random_decohering_instruments(n: usize, k: usize, steps: usize, rng: &mut ChaCha8Rng) -> Vec<Instrument> {
    let u = random_unitary(n, rng);
    (0..steps).map(|_| instrument_in_basis(&u, &random_assignment(n, k, rng), k)).collect()
}

/// One instrument in a fresh random basis.
pub fn random_instrument(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Instrument {
    let u = random_unitary(n, rng);
    instrument_in_basis(&u, &random_assignment(n, k, rng), k)
}

/// `tr(ρ Π Π*)` by naive products of the per-step projections.
pub fn naive_lsw(instruments: &[Instrument], state: &DensityMatrix, word: &[usize]) -> f64 {
    let n = state.dim();
    let mut op = eye(n);
    for (i, &s) in word.iter().enumerate() {
        let step = &instruments[i % instruments.len()];
        op = matmul(&op, &to_dense(step.projection(s).matrix()));
    }
    trace(&matmul(&to_dense(state.matrix()), &matmul(&op, &adjoint(&op)))).re
}

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations on its real
/// symmetric `2n × 2n` embedding `[[A_r, -A_i], [A_i, A_r]]`; each eigenvalue
/// appears there twice and is reported once. Ascending.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let m = 2 * n;
    let mut s = vec![vec![0.0; m]; m];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = a[i][j].re;
            s[i + n][j + n] = a[i][j].re;
            s[i][j + n] = -a[i][j].im;
            s[i + n][j] = a[i][j].im;
        }
    }
    for _sweep in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| s[i][j] * s[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if s[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..m {
                    let (skp, skq) = (s[k][p], s[k][q]);
                    s[k][p] = cs * skp - sn * skq;
                    s[k][q] = sn * skp + cs * skq;
                }
                for k in 0..m {
                    let (spk, sqk) = (s[p][k], s[q][k]);
                    s[p][k] = cs * spk - sn * sqk;
                    s[q][k] = sn * spk + cs * sqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..m).map(|i| s[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev.into_iter().step_by(2).collect()
}

/// Mixture-of-products oracle `Σ_ν p_ν Π_i p(w_i|ν)`.
pub fn mixture_oracle(law: &[Vec<f64>], weights: &[f64], word: &[usize]) -> f64 {
    weights
        .iter()
        .zip(law)
        .map(|(w, row)| w * word.iter().map(|&s| row[s]).product::<f64>())
        .sum()
}
