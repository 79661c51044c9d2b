//! Renormalized density matrices Q = P − P⁰₋ and their functionals.
//!
//! Matrix entries Q_{ab} = ⟨e_{p_a}, Q e_{p_b}⟩ in the orthonormal plane-wave
//! basis are the kernel Q̂(p_a, p_b) up to the lattice measure, so
//! Hilbert–Schmidt and weighted kernel norms are plain sums over entries.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coulomb::{coulomb_potential, density_offset, density_points, ChargeDensity};
use crate::dirac::{block_at, dispersion, hermiticity_residual, m_kernel, FreeDirac, Mat4};
use crate::error::{BdfError, Result};
use crate::lattice::{LatticeSpec, MomentumLattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Linear,
    Scf,
    Manual,
}

#[derive(Debug, Clone)]
pub struct VacuumState {
    pub spec: LatticeSpec,
    pub q: Mat<Complex64>,
    pub fermi_level: f64,
    pub provenance: Provenance,
}

impl VacuumState {
    pub fn new(
        lattice: &MomentumLattice,
        q: Mat<Complex64>,
        fermi_level: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if q.nrows() != lattice.dim() || q.ncols() != lattice.dim() {
            return Err(BdfError::InvalidArgument(format!(
                "state matrix is {}x{}, lattice dimension {}",
                q.nrows(),
                q.ncols(),
                lattice.dim()
            )));
        }
        Ok(VacuumState {
            spec: *lattice.spec(),
            q,
            fermi_level,
            provenance,
        })
    }

    pub fn zero(lattice: &MomentumLattice, fermi_level: f64) -> Self {
        VacuumState {
            spec: *lattice.spec(),
            q: Mat::zeros(lattice.dim(), lattice.dim()),
            fermi_level,
            provenance: Provenance::Manual,
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}

/// (tr Q₊₊, tr Q₋₋), using only the diagonal momentum blocks.
pub fn trace_parts(free: &FreeDirac, q: &Mat<Complex64>) -> (f64, f64) {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for a in 0..free.len() {
        let blk = block_at(q, a, a);
        plus += (free.plus[a] * blk).trace().re;
        minus += (free.minus[a] * blk).trace().re;
    }
    (plus, minus)
}

/// tr₀ Q = tr Q₊₊ + tr Q₋₋.
pub fn generalized_trace(lattice: &MomentumLattice, q: &Mat<Complex64>) -> f64 {
    let (p, m) = trace_parts(&FreeDirac::new(lattice), q);
    p + m
}

fn density_coefficients(lattice: &MomentumLattice, q: &Mat<Complex64>) -> Vec<Complex64> {
    let n2 = density_points(lattice.spec());
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n2 * n2 * n2];
    let pts = lattice.points();
    for (b, jb) in pts.iter().enumerate() {
        for (a, ja) in pts.iter().enumerate() {
            let t = (0..4).map(|s| q[(4 * a + s, 4 * b + s)]).sum::<Complex64>();
            coeffs[density_offset([ja[0] - jb[0], ja[1] - jb[1], ja[2] - jb[2]], n2)] += t;
        }
    }
    coeffs
}

/// ρ_Q with coefficients ρ_K = Σ_{p−q=K} tr Q(p,q), i.e. ρ_Q(x) = tr Q(x,x).
///
/// The imaginary part of the position-space density is bounded by
/// V⁻¹ Σ_K |ρ_K − conj ρ_{−K}|/2; above 1e-10 the input is treated as
/// non-Hermitian, below it is discarded.
pub fn density_of(lattice: &MomentumLattice, q: &Mat<Complex64>) -> Result<ChargeDensity> {
    let spec = *lattice.spec();
    let coeffs = density_coefficients(lattice, q);
    let n2 = density_points(&spec);
    let mut residue = 0.0;
    for (g, j) in ChargeDensity::zeros(spec).indices().enumerate() {
        let gm = density_offset([-j[0], -j[1], -j[2]], n2);
        residue += 0.5 * (coeffs[g] - coeffs[gm].conj()).norm();
    }
    residue /= spec.volume();
    if residue > 1e-10 {
        return Err(BdfError::NonHermitian(residue));
    }
    ChargeDensity::from_coefficients(spec, coeffs)
}

/// ‖Q‖²_𝒬 = Σ_{p,q} E(p−q)² E(p+q) |Q(p,q)|².
pub fn q_norm(lattice: &MomentumLattice, q: &Mat<Complex64>) -> f64 {
    let k = lattice.momenta();
    let m = k.len();
    let mut s = 0.0;
    for b in 0..m {
        for a in 0..m {
            let diff = [k[a][0] - k[b][0], k[a][1] - k[b][1], k[a][2] - k[b][2]];
            let sum = [k[a][0] + k[b][0], k[a][1] + k[b][1], k[a][2] + k[b][2]];
            let w = dispersion(diff).powi(2) * dispersion(sum);
            let mut f = 0.0;
            for j in 0..4 {
                for i in 0..4 {
                    f += q[(4 * a + i, 4 * b + j)].norm_sqr();
                }
            }
            s += w * f;
        }
    }
    s.sqrt()
}

/// ‖Q‖_𝒬 + ‖ρ‖_{L²∩𝒞}.
pub fn x_norm(lattice: &MomentumLattice, q: &Mat<Complex64>, rho: &ChargeDensity) -> f64 {
    q_norm(lattice, q) + rho.l2c_norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePairNorms {
    pub q_norm: f64,
    pub s2_norm: f64,
    pub trace_plus: f64,
    pub trace_minus: f64,
    pub x_norm: f64,
}

pub fn state_norms(
    lattice: &MomentumLattice,
    q: &Mat<Complex64>,
    rho: &ChargeDensity,
) -> StatePairNorms {
    let (trace_plus, trace_minus) = trace_parts(&FreeDirac::new(lattice), q);
    let qn = q_norm(lattice, q);
    StatePairNorms {
        q_norm: qn,
        s2_norm: q.norm_l2(),
        trace_plus,
        trace_minus,
        x_norm: qn + rho.l2c_norm(),
    }
}

/// Blocks of a dense operator, row-major: `out[a * m + b]` is block (a, b).
pub(crate) fn to_blocks(q: &Mat<Complex64>, m: usize) -> Vec<Mat4> {
    let mut out = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            out.push(block_at(q, a, b));
        }
    }
    out
}

/// Exchange operator R_Q with kernel Q(x,y)·W(x−y), W the periodized Coulomb
/// kernel band-limited to 0 < |k| ≤ 2Λ. In momentum space
/// R(p,q) = V⁻¹ Σ_k W(k) Q(p−k, q−k), with both shifted momenta in the ball.
pub fn exchange_operator(lattice: &MomentumLattice, q: &Mat<Complex64>) -> Mat<Complex64> {
    let pts = lattice.points();
    let m = pts.len();
    let blocks = to_blocks(q, m);
    let dk2 = lattice.dk().powi(2);
    let pref = 4.0 * PI / lattice.volume();

    // Upper triangle (c >= a) of each block row; the rest follows from
    // hermiticity.
    let rows: Vec<Vec<Mat4>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let ja = pts[a];
            let mut row = vec![Mat4::zero(); m - a];
            for (b, jb) in pts.iter().enumerate() {
                if b == a {
                    continue;
                }
                let k2 = ((ja[0] - jb[0]).pow(2) + (ja[1] - jb[1]).pow(2) + (ja[2] - jb[2]).pow(2))
                    as f64;
                let w = Complex64::new(pref / (dk2 * k2), 0.0);
                let shift = [jb[0] - ja[0], jb[1] - ja[1], jb[2] - ja[2]];
                for c in a..m {
                    let jc = pts[c];
                    if let Some(d) =
                        lattice.index_of([jc[0] + shift[0], jc[1] + shift[1], jc[2] + shift[2]])
                    {
                        let src = &blocks[b * m + d].0;
                        let dst = &mut row[c - a].0;
                        for i in 0..4 {
                            for j in 0..4 {
                                dst[i][j] += w * src[i][j];
                            }
                        }
                    }
                }
            }
            row
        })
        .collect();

    let mut r = Mat::<Complex64>::zeros(4 * m, 4 * m);
    for (a, row) in rows.iter().enumerate() {
        for (off, blk) in row.iter().enumerate() {
            let c = a + off;
            for i in 0..4 {
                for j in 0..4 {
                    r[(4 * a + i, 4 * c + j)] = blk.0[i][j];
                    if c != a {
                        r[(4 * c + j, 4 * a + i)] = blk.0[i][j].conj();
                    }
                }
            }
        }
    }
    // Diagonal blocks: symmetrize against round-off.
    for a in 0..m {
        for i in 0..4 {
            for j in i..4 {
                let v = 0.5 * (r[(4 * a + i, 4 * a + j)] + r[(4 * a + j, 4 * a + i)].conj());
                r[(4 * a + i, 4 * a + j)] = v;
                r[(4 * a + j, 4 * a + i)] = v.conj();
            }
        }
    }
    r
}

/// Σ_ij conj(Q_ij) R_ij = ∬ |Q(x,y)|² W(x−y) dx dy.
pub fn exchange_pairing(q: &Mat<Complex64>, r: &Mat<Complex64>) -> f64 {
    let n = q.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            s += (q[(i, j)].conj() * r[(i, j)]).re;
        }
    }
    s
}

pub fn exchange_energy(lattice: &MomentumLattice, q: &Mat<Complex64>) -> f64 {
    exchange_pairing(q, &exchange_operator(lattice, q))
}

/// First-order response G₁,₀(ρ) = (2π)⁻¹ ∫ (D⁰+iη)⁻¹ V_ρ (D⁰+iη)⁻¹ dη,
/// assembled from its kernel ½ V_ρ(p−q) M(p,q).
pub fn g10(lattice: &MomentumLattice, rho: &ChargeDensity) -> Mat<Complex64> {
    let v = coulomb_potential(rho);
    let pts = lattice.points();
    let k = lattice.momenta();
    let m = pts.len();
    let inv_v = 1.0 / lattice.volume();
    let mut g = Mat::<Complex64>::zeros(4 * m, 4 * m);
    for b in 0..m {
        for a in 0..m {
            if a == b {
                continue;
            }
            let j = [
                pts[a][0] - pts[b][0],
                pts[a][1] - pts[b][1],
                pts[a][2] - pts[b][2],
            ];
            let vk = v.coefficient(j) * (0.5 * inv_v);
            if vk == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mk = m_kernel(k[a], k[b]);
            for i in 0..4 {
                for jj in 0..4 {
                    g[(4 * a + i, 4 * b + jj)] = vk * mk.0[i][jj];
                }
            }
        }
    }
    g
}

/// Lattice counterpart of B_Λ(K):
/// (8π/(V|K|²)) Σ_{p−q=K} (E_p+E_q)⁻¹ (1 − (1 + p·q)/(E_p E_q)),
/// the exact multiplier in ρ[G₁,₀(ρ')]_K = −B^lat(K) ρ'_K on the lattice.
pub fn lattice_screening(lattice: &MomentumLattice, j: [i32; 3]) -> f64 {
    if j == [0, 0, 0] {
        return f64::NAN;
    }
    let dk = lattice.dk();
    let kvec = j.map(|x| x as f64 * dk);
    let k2: f64 = kvec.iter().map(|x| x * x).sum();
    let mut s = 0.0;
    for (a, ja) in lattice.points().iter().enumerate() {
        let jb = [ja[0] - j[0], ja[1] - j[1], ja[2] - j[2]];
        if let Some(b) = lattice.index_of(jb) {
            let p = lattice.momenta()[a];
            let q = lattice.momenta()[b];
            let ep = dispersion(p);
            let eq = dispersion(q);
            let pq = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
            s += (1.0 - (1.0 + pq) / (ep * eq)) / (ep + eq);
        }
    }
    8.0 * PI / (lattice.volume() * k2) * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// ‖Q − Q*‖_F
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Distance of the spectrum of P⁰₋ + Q outside [0, 1].
    pub spectral_violation: f64,
    /// ‖P² − P‖_F for P = P⁰₋ + Q.
    pub projector_residual: f64,
    /// ‖Q² − (Q₊₊ − Q₋₋)‖_F.
    pub square_identity_residual: f64,
}

impl AdmissibilityReport {
    pub fn admissible(&self, tol: f64) -> bool {
        self.hermiticity <= tol && self.spectral_violation <= tol
    }

    pub fn is_projector_difference(&self, tol: f64) -> bool {
        self.admissible(tol)
            && self.projector_residual <= tol
            && self.square_identity_residual <= tol
    }
}

pub fn admissibility_check(lattice: &MomentumLattice, q: &Mat<Complex64>) -> AdmissibilityReport {
    let free = FreeDirac::new(lattice);
    let m = free.len();
    let hermiticity = hermiticity_residual(q);

    // Hermitian part for the spectral test.
    let n = q.nrows();
    let mut p = Mat::<Complex64>::from_fn(n, n, |i, j| 0.5 * (q[(i, j)] + q[(j, i)].conj()));
    for a in 0..m {
        for i in 0..4 {
            for j in 0..4 {
                p[(4 * a + i, 4 * a + j)] += free.minus[a].0[i][j];
            }
        }
    }
    let (min_eigenvalue, max_eigenvalue) = match p.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(ev) => (ev[0], ev[n - 1]),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let spectral_violation = (-min_eigenvalue).max(max_eigenvalue - 1.0).max(0.0);

    // Q² − (Q₊₊ − Q₋₋) and P² − P = Q² + P⁰₋Q + QP⁰₋ − Q share one product.
    let q2 = q * q;
    let mut sq = 0.0;
    let mut pr = 0.0;
    for b in 0..m {
        for a in 0..m {
            let qab = block_at(q, a, b);
            let q2ab = block_at(&q2, a, b);
            let signed = free.plus[a] * qab * free.plus[b] - free.minus[a] * qab * free.minus[b];
            sq += (q2ab - signed).frobenius_sqr();
            let pp = q2ab + free.minus[a] * qab + qab * free.minus[b] - qab;
            pr += pp.frobenius_sqr();
        }
    }
    AdmissibilityReport {
        hermiticity,
        min_eigenvalue,
        max_eigenvalue,
        spectral_violation,
        projector_residual: pr.sqrt(),
        square_identity_residual: sq.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;

    fn toy() -> MomentumLattice {
        build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap()
    }

    /// |φ⟩⟨φ| for φ the positive-energy spinor at momentum index a.
    fn electron(lat: &MomentumLattice, a: usize) -> Mat<Complex64> {
        let free = FreeDirac::new(lat);
        let mut q = Mat::<Complex64>::zeros(lat.dim(), lat.dim());
        // First column of Π₊(k), normalized, is a positive-energy spinor.
        let col: Vec<Complex64> = (0..4).map(|i| free.plus[a].0[i][0]).collect();
        let nrm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..4 {
            for j in 0..4 {
                q[(4 * a + i, 4 * a + j)] = col[i] * col[j].conj() / (nrm * nrm);
            }
        }
        q
    }

    #[test]
    fn zero_state() {
        let lat = toy();
        let q = Mat::<Complex64>::zeros(lat.dim(), lat.dim());
        assert_eq!(generalized_trace(&lat, &q), 0.0);
        let rho = density_of(&lat, &q).unwrap();
        assert_eq!(rho.l2_norm(), 0.0);
        assert_eq!(q_norm(&lat, &q), 0.0);
        assert_eq!(exchange_operator(&lat, &q).norm_l2(), 0.0);
        assert_eq!(g10(&lat, &ChargeDensity::zeros(*lat.spec())).norm_l2(), 0.0);
    }

    #[test]
    fn rank_one_electron() {
        let lat = toy();
        let q = electron(&lat, 5);
        assert!((generalized_trace(&lat, &q) - 1.0).abs() < 1e-14);
        let rho = density_of(&lat, &q).unwrap();
        assert!((rho.total_charge() - 1.0).abs() < 1e-14);
        // A single plane wave has uniform density 1/V.
        let v = rho.position_values();
        let inv_vol = 1.0 / lat.volume();
        assert!(v.iter().all(|x| (x - inv_vol).abs() < 1e-14));
        let k = lat.momenta()[5];
        let w = dispersion([2.0 * k[0], 2.0 * k[1], 2.0 * k[2]]);
        assert!((q_norm(&lat, &q) - w.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn q_norm_of_momentum_diagonal_state_by_hand() {
        // Three momenta on the toy lattice with weights on the diagonal only:
        // ‖Q‖²_𝒬 = Σ_a E(2p_a) ‖Q_aa‖²_F.
        let lat = toy();
        let picks = [0usize, 7, 13];
        let mut q = Mat::<Complex64>::zeros(lat.dim(), lat.dim());
        let mut expect = 0.0;
        for (n, &a) in picks.iter().enumerate() {
            let v = (n + 1) as f64 * 0.5;
            q[(4 * a + 1, 4 * a + 1)] = Complex64::new(v, 0.0);
            let k = lat.momenta()[a];
            expect += dispersion([2.0 * k[0], 2.0 * k[1], 2.0 * k[2]]) * v * v;
        }
        assert!((q_norm(&lat, &q) - expect.sqrt()).abs() < 1e-13);
        assert!(q.norm_l2() <= q_norm(&lat, &q));
    }

    #[test]
    fn non_hermitian_density_rejected() {
        let lat = toy();
        let mut q = Mat::<Complex64>::zeros(lat.dim(), lat.dim());
        q[(0, 8)] = Complex64::new(0.1, 0.0);
        assert!(matches!(
            density_of(&lat, &q),
            Err(BdfError::NonHermitian(_))
        ));
    }

    #[test]
    fn exchange_is_hermitian_and_matches_direct_sum() {
        let lat = toy();
        let m = lat.len();
        // Hermitian Q with a few scattered entries.
        let mut q = Mat::<Complex64>::zeros(4 * m, 4 * m);
        let entries = [
            (3, 17, 0.3, 0.1),
            (20, 40, -0.2, 0.05),
            (50, 51, 0.4, 0.0),
            (7, 7, 0.25, 0.0),
        ];
        for (i, j, re, im) in entries {
            q[(i, j)] += Complex64::new(re, im);
            if i != j {
                q[(j, i)] += Complex64::new(re, -im);
            }
        }
        let r = exchange_operator(&lat, &q);
        assert!(hermiticity_residual(&r) < 1e-15);
        // Direct triple sum R(p,q) = V⁻¹ Σ_k W(k) Q(p−k, q−k).
        let pts = lat.points();
        let pref = 4.0 * PI / lat.volume();
        let dk2 = lat.dk().powi(2);
        for a in [0usize, 4, 10] {
            for c in [1usize, 4, 12] {
                let mut acc = Mat4::zero();
                for kx in -4..=4 {
                    for ky in -4..=4 {
                        for kz in -4..=4 {
                            let kk = kx * kx + ky * ky + kz * kz;
                            if kk == 0 {
                                continue;
                            }
                            let s = |p: [i32; 3]| [p[0] - kx, p[1] - ky, p[2] - kz];
                            if let (Some(b), Some(d)) =
                                (lat.index_of(s(pts[a])), lat.index_of(s(pts[c])))
                            {
                                acc = acc + block_at(&q, b, d).scale_re(pref / (dk2 * kk as f64));
                            }
                        }
                    }
                }
                assert!((acc - block_at(&r, a, c)).frobenius() < 1e-14);
            }
        }
    }

    #[test]
    fn lattice_screening_is_exact_multiplier() {
        let lat = toy();
        let rho = ChargeDensity::gaussian(*lat.spec(), 1.3, 0.9);
        let g = g10(&lat, &rho);
        assert!(hermiticity_residual(&g) < 1e-15);
        for a in 0..lat.len() {
            assert!(block_at(&g, a, a).frobenius() == 0.0);
        }
        let out = density_of(&lat, &g).unwrap();
        for j in [[1, 0, 0], [1, 1, 0], [2, 1, -1], [0, -2, 0]] {
            let want = -lattice_screening(&lat, j) * rho.coefficient(j);
            let got = out.coefficient(j);
            assert!(
                (got - want).norm() <= 1e-12 * want.norm(),
                "{j:?}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn admissibility_flags() {
        let lat = toy();
        let q = electron(&lat, 3);
        let rep = admissibility_check(&lat, &q);
        assert!(rep.is_projector_difference(1e-12), "{rep:?}");
        let scaled = Mat::<Complex64>::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * 1.5);
        let rep = admissibility_check(&lat, &scaled);
        assert!(rep.spectral_violation > 0.4);
        let mut noisy = q.clone();
        noisy[(0, 5)] += Complex64::new(1e-3, 0.0);
        noisy[(5, 0)] -= Complex64::new(1e-3, 0.0);
        let rep = admissibility_check(&lat, &noisy);
        assert!((rep.hermiticity - 2f64.sqrt() * 2e-3).abs() < 1e-12);
    }
}
