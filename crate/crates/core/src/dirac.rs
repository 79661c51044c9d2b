//! Free Dirac operator D⁰ = α·p + β on the cutoff lattice, its spectral
//! projectors, and the polarization kernel M(p,q).
//!
//! Dirac matrices in the standard (Pauli-block) representation:
//! α_j = [[0, σ_j], [σ_j, 0]], β = diag(1, 1, -1, -1). The first two spinor
//! components are the large (upper) ones.

use std::ops::{Add, Mul, Sub};

use faer::Mat;
use num_complex::Complex64;

use crate::lattice::MomentumLattice;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// E(x) = √(1+|x|²).
pub fn dispersion(k: [f64; 3]) -> f64 {
    (1.0 + k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// A 4×4 complex matrix acting on one momentum's spinor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [[Complex64; 4]; 4]);

impl Mat4 {
    pub fn zero() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::diag([ONE; 4])
    }

    pub fn diag(d: [Complex64; 4]) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= s);
        m
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn frobenius_sqr(&self) -> f64 {
        self.0.iter().flatten().map(|c| c.norm_sqr()).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sqr().sqrt()
    }

    pub fn apply(&self, v: [Complex64; 4]) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i] += self.0[i][j] * v[j];
            }
        }
        out
    }

    /// Eigenvalues of a Hermitian block, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 4] {
        let m = Mat::<Complex64>::from_fn(4, 4, |i, j| self.0[i][j]);
        let ev = m
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .expect("4x4 Hermitian eigenvalues");
        [ev[0], ev[1], ev[2], ev[3]]
    }
}

impl Add for Mat4 {
    type Output = Mat4;
    fn add(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl Sub for Mat4 {
    type Output = Mat4;
    fn sub(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= rhs.0[i][j];
            }
        }
        m
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut m = Mat4::zero();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..4 {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

fn pauli(j: usize) -> [[Complex64; 2]; 2] {
    match j {
        0 => [[ZERO, ONE], [ONE, ZERO]],
        1 => [[ZERO, -I], [I, ZERO]],
        2 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("pauli index {j} out of range"),
    }
}

/// α_j for j = 0, 1, 2.
pub fn alpha(j: usize) -> Mat4 {
    let s = pauli(j);
    let mut m = Mat4::zero();
    for r in 0..2 {
        for c in 0..2 {
            m.0[r][c + 2] = s[r][c];
            m.0[r + 2][c] = s[r][c];
        }
    }
    m
}

pub fn beta() -> Mat4 {
    Mat4::diag([ONE, ONE, -ONE, -ONE])
}

/// α·k + β.
pub fn dirac_block(k: [f64; 3]) -> Mat4 {
    let mut m = beta();
    for (j, kj) in k.iter().enumerate() {
        m = m + alpha(j).scale_re(*kj);
    }
    m
}

/// Spectral projector of α·k + β onto its ±E(k) eigenspace.
pub fn projector_block(k: [f64; 3], positive: bool) -> Mat4 {
    let e = dispersion(k);
    let s = if positive { 0.5 / e } else { -0.5 / e };
    Mat4::identity().scale_re(0.5) + dirac_block(k).scale_re(s)
}

/// M(p,q) = (E(p)+E(q))⁻¹ [ (α·p+β)(α·q+β)/(E(p)E(q)) − 1 ].
pub fn m_kernel(p: [f64; 3], q: [f64; 3]) -> Mat4 {
    let ep = dispersion(p);
    let eq = dispersion(q);
    let prod = (dirac_block(p) * dirac_block(q)).scale_re(1.0 / (ep * eq));
    (prod - Mat4::identity()).scale_re(1.0 / (ep + eq))
}

/// Checks the Clifford relations of the matrices above; returns the largest
/// deviation.
pub fn clifford_residual() -> f64 {
    let id2 = Mat4::identity().scale_re(2.0);
    let b = beta();
    let mut worst = (b * b - Mat4::identity()).frobenius();
    for i in 0..3 {
        let ai = alpha(i);
        worst = worst.max((ai * b + b * ai).frobenius());
        for j in 0..3 {
            let aj = alpha(j);
            let target = if i == j { id2 } else { Mat4::zero() };
            worst = worst.max((ai * aj + aj * ai - target).frobenius());
        }
    }
    worst
}

/// Dense Hermitian matrix on the cutoff spinor space, optionally carrying
/// its per-momentum blocks when it is diagonal in momentum.
#[derive(Debug, Clone)]
pub struct LatticeOperator {
    matrix: Mat<Complex64>,
    blocks: Option<Vec<Mat4>>,
}

impl LatticeOperator {
    pub fn from_matrix(matrix: Mat<Complex64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        LatticeOperator {
            matrix,
            blocks: None,
        }
    }

    pub fn from_blocks(blocks: Vec<Mat4>) -> Self {
        LatticeOperator {
            matrix: blocks_to_dense(&blocks),
            blocks: Some(blocks),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix(Mat::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Mat<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<Complex64> {
        self.matrix
    }

    pub fn blocks(&self) -> Option<&[Mat4]> {
        self.blocks.as_deref()
    }

    /// ‖A − A*‖_F.
    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.matrix)
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm_l2()
    }
}

pub fn hermiticity_residual(a: &Mat<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            s += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn blocks_to_dense(blocks: &[Mat4]) -> Mat<Complex64> {
    let dim = 4 * blocks.len();
    let mut m = Mat::<Complex64>::zeros(dim, dim);
    for (a, b) in blocks.iter().enumerate() {
        for i in 0..4 {
            for j in 0..4 {
                m[(4 * a + i, 4 * a + j)] = b.0[i][j];
            }
        }
    }
    m
}

/// Per-momentum data of the free operator, shared by everything that needs
/// D⁰, |D⁰| or P⁰±.
#[derive(Debug, Clone)]
pub struct FreeDirac {
    pub hamiltonian: Vec<Mat4>,
    pub plus: Vec<Mat4>,
    pub minus: Vec<Mat4>,
    pub energies: Vec<f64>,
}

impl FreeDirac {
    pub fn new(lattice: &MomentumLattice) -> Self {
        let k = lattice.momenta();
        FreeDirac {
            hamiltonian: k.iter().map(|p| dirac_block(*p)).collect(),
            plus: k.iter().map(|p| projector_block(*p, true)).collect(),
            minus: k.iter().map(|p| projector_block(*p, false)).collect(),
            energies: k.iter().map(|p| dispersion(*p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

pub fn free_operator(lattice: &MomentumLattice) -> LatticeOperator {
    LatticeOperator::from_blocks(FreeDirac::new(lattice).hamiltonian)
}

/// (P⁰₊, P⁰₋).
pub fn free_projectors(lattice: &MomentumLattice) -> (LatticeOperator, LatticeOperator) {
    let free = FreeDirac::new(lattice);
    (
        LatticeOperator::from_blocks(free.plus),
        LatticeOperator::from_blocks(free.minus),
    )
}

/// Read the 4×4 block (a, b) of a dense operator.
pub fn block_at(m: &Mat<Complex64>, a: usize, b: usize) -> Mat4 {
    let mut out = Mat4::zero();
    for i in 0..4 {
        for j in 0..4 {
            out.0[i][j] = m[(4 * a + i, 4 * b + j)];
        }
    }
    out
}

pub fn set_block(m: &mut Mat<Complex64>, a: usize, b: usize, v: &Mat4) {
    for i in 0..4 {
        for j in 0..4 {
            m[(4 * a + i, 4 * b + j)] = v.0[i][j];
        }
    }
}

/// L · A · R for block-diagonal L, R.
pub fn sandwich(left: &[Mat4], a: &Mat<Complex64>, right: &[Mat4]) -> Mat<Complex64> {
    let m = left.len();
    let mut out = Mat::<Complex64>::zeros(4 * m, 4 * m);
    for b in 0..m {
        for a_ in 0..m {
            let blk = left[a_] * block_at(a, a_, b) * right[b];
            set_block(&mut out, a_, b, &blk);
        }
    }
    out
}

/// The four blocks A_{εε'} = P⁰_ε A P⁰_ε'.
#[derive(Debug, Clone)]
pub struct BlockSplit {
    pub pp: Mat<Complex64>,
    pub pm: Mat<Complex64>,
    pub mp: Mat<Complex64>,
    pub mm: Mat<Complex64>,
}

pub fn block_split(lattice: &MomentumLattice, a: &Mat<Complex64>) -> BlockSplit {
    let free = FreeDirac::new(lattice);
    block_split_with(&free, a)
}

pub fn block_split_with(free: &FreeDirac, a: &Mat<Complex64>) -> BlockSplit {
    BlockSplit {
        pp: sandwich(&free.plus, a, &free.plus),
        pm: sandwich(&free.plus, a, &free.minus),
        mp: sandwich(&free.minus, a, &free.plus),
        mm: sandwich(&free.minus, a, &free.minus),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn clifford_algebra() {
        assert!(clifford_residual() < 1e-15);
    }

    #[test]
    fn rest_frame_block_is_beta() {
        let b = dirac_block([0.0; 3]);
        assert_eq!(b, beta());
        assert_eq!(b.hermitian_eigenvalues(), [-1.0, -1.0, 1.0, 1.0]);
        let pm = projector_block([0.0; 3], false);
        assert_eq!(pm, Mat4::diag([ZERO, ZERO, ONE, ONE]));
    }

    #[test]
    fn boosted_block_eigenvalues() {
        let ev = dirac_block([3.0, 0.0, 0.0]).hermitian_eigenvalues();
        let e = 10f64.sqrt();
        for (v, t) in ev.iter().zip([-e, -e, e, e]) {
            assert!((v - t).abs() < 1e-12);
        }
    }

    #[test]
    fn block_squares_to_energy() {
        let k = [0.3, -1.7, 0.45];
        let h = dirac_block(k);
        let e2 = 1.0 + k.iter().map(|x| x * x).sum::<f64>();
        assert!((h * h - Mat4::identity().scale_re(e2)).frobenius() < 1e-13);
        assert!((h - h.adjoint()).frobenius() < 1e-15);
        let p = projector_block(k, true);
        assert!((p * p - p).frobenius() < 1e-14);
        assert!((p.trace() - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn m_kernel_vanishes_on_diagonal() {
        assert!(m_kernel([0.2, 0.5, -1.0], [0.2, 0.5, -1.0]).frobenius() < 1e-15);
    }

    #[test]
    fn m_kernel_antipodal_by_hand() {
        // p = (1,0,0), q = -p, E = √2:
        // (α₁+β)(−α₁+β) = −α₁² + α₁β − βα₁ + β² = 2α₁β,
        // so M = (α₁β − 1)/(2√2).
        let m = m_kernel([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]);
        let s = 1.0 / (2.0 * 2f64.sqrt());
        // α₁β: columns 2,3 of α₁ pick up a minus sign.
        let mut expect = Mat4::zero();
        expect.0[0][3] = c(-s, 0.0);
        expect.0[1][2] = c(-s, 0.0);
        expect.0[2][1] = c(s, 0.0);
        expect.0[3][0] = c(s, 0.0);
        for i in 0..4 {
            expect.0[i][i] = c(-s, 0.0);
        }
        assert!((m - expect).frobenius() < 1e-15);
    }

    #[test]
    fn free_operator_structure() {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let d0 = free_operator(&lat);
        let (pp, pm) = free_projectors(&lat);
        assert!(d0.hermiticity_residual() < 1e-14);
        let sum = pp.matrix() + pm.matrix();
        let id = Mat::<Complex64>::identity(lat.dim(), lat.dim());
        assert!((&sum - &id).norm_l2() < 1e-13);
        // P⁰₋ D⁰ = −|D⁰| P⁰₋
        let free = FreeDirac::new(&lat);
        let abs_d: Vec<Mat4> = free
            .energies
            .iter()
            .map(|e| Mat4::identity().scale_re(*e))
            .collect();
        let lhs = pm.matrix() * d0.matrix();
        let rhs = -(blocks_to_dense(&abs_d) * pm.matrix());
        assert!((&lhs - &rhs).norm_l2() < 1e-12);
        let tr: f64 = (0..lat.dim()).map(|i| pm.matrix()[(i, i)].re).sum();
        assert!((tr - 2.0 * lat.len() as f64).abs() < 1e-11);
        // Spectrum symmetric, within [1, √(1+Λ²)].
        let ev = d0
            .matrix()
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap();
        let n = ev.len();
        for i in 0..n {
            assert!((ev[i] + ev[n - 1 - i]).abs() < 1e-12);
            assert!(ev[i].abs() >= 1.0 - 1e-12);
            assert!(ev[i].abs() <= (1.0 + 4.0f64).sqrt() + 1e-12);
        }
        let emax = free.energies.iter().cloned().fold(0.0, f64::max);
        assert!((ev[n - 1] - emax).abs() < 1e-12);
    }

    #[test]
    fn block_split_of_free_and_identity() {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let d0 = free_operator(&lat);
        let s = block_split(&lat, d0.matrix());
        assert!(s.pm.norm_l2() < 1e-13 && s.mp.norm_l2() < 1e-13);
        let id = Mat::<Complex64>::identity(lat.dim(), lat.dim());
        let s = block_split(&lat, &id);
        let (pp, pm) = free_projectors(&lat);
        assert!((&s.pp - pp.matrix()).norm_l2() < 1e-13);
        assert!((&s.mm - pm.matrix()).norm_l2() < 1e-13);
        assert!(s.pm.norm_l2() < 1e-13);
    }
}
