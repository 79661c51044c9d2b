//! Periodic box discretization of the cutoff space: functions whose Fourier
//! transform is supported in the ball |k| <= Λ.
//!
//! Positions are x = j·L/n, momenta k = j·2π/L with j folded to [-n/2, n/2).
//! The discrete transform is normalized to be unitary,
//! f̂(k) = n^{-3/2} Σ_x f(x) e^{-ik·x}, so it is the lattice counterpart of the
//! (2π)^{-3/2} convention. Operators act on the span of the orthonormal plane
//! waves e_k(x) = L^{-3/2} e^{ik·x} with |k| <= Λ; their matrices are indexed by
//! `4 * a + s` where `a` is the position of k in [`MomentumLattice::points`]
//! and `s` the spinor component.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{BdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub n_per_axis: usize,
    pub box_length: f64,
    pub cutoff: f64,
}

impl LatticeSpec {
    pub fn new(n_per_axis: usize, box_length: f64, cutoff: f64) -> Self {
        LatticeSpec {
            n_per_axis,
            box_length,
            cutoff,
        }
    }

    /// Momentum spacing 2π/L.
    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.box_length
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_per_axis;
        if n == 0 || !n.is_multiple_of(2) {
            return Err(BdfError::InvalidLattice(format!(
                "n_per_axis must be a positive even integer, got {n}"
            )));
        }
        if !(self.box_length.is_finite() && self.box_length > 0.0) {
            return Err(BdfError::InvalidLattice(format!(
                "box_length must be positive, got {}",
                self.box_length
            )));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 1.0) {
            return Err(BdfError::InvalidLattice(format!(
                "cutoff must exceed 1, got {}",
                self.cutoff
            )));
        }
        // Strict: a ball touching the edge of the window would keep -n/2 but
        // not its mirror image, breaking the k -> -k symmetry of the ball.
        let edge = (n / 2) as f64 * self.dk();
        if self.cutoff >= edge {
            return Err(BdfError::InvalidLattice(format!(
                "cutoff {} does not fit inside the grid momentum range {edge:.6}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Fold a grid index in 0..n to the symmetric window [-n/2, n/2).
pub fn fold(i: usize, n: usize) -> i32 {
    if i < n / 2 {
        i as i32
    } else {
        i as i32 - n as i32
    }
}

/// Inverse of [`fold`]: a signed index to its slot in 0..n.
pub fn unfold(j: i32, n: usize) -> usize {
    j.rem_euclid(n as i32) as usize
}

#[derive(Debug, Clone)]
pub struct MomentumLattice {
    spec: LatticeSpec,
    points: Vec<[i32; 3]>,
    momenta: Vec<[f64; 3]>,
    mask: Vec<bool>,
    slot: Vec<Option<usize>>,
    reach: i32,
    dense_index: Vec<i32>,
}

pub fn build_lattice(spec: LatticeSpec) -> Result<MomentumLattice> {
    spec.validate()?;
    let n = spec.n_per_axis;
    let half = (n / 2) as i32;
    let dk = spec.dk();
    let lam2 = spec.cutoff * spec.cutoff;

    let mut points = Vec::new();
    for jx in -half..half {
        for jy in -half..half {
            for jz in -half..half {
                let k2 = dk * dk * (jx * jx + jy * jy + jz * jz) as f64;
                if k2 <= lam2 {
                    points.push([jx, jy, jz]);
                }
            }
        }
    }
    let momenta = points
        .iter()
        .map(|j| [j[0] as f64 * dk, j[1] as f64 * dk, j[2] as f64 * dk])
        .collect();

    let mut mask = vec![false; n * n * n];
    let mut slot = vec![None; n * n * n];
    for (a, j) in points.iter().enumerate() {
        let g = grid_offset(*j, n);
        mask[g] = true;
        slot[g] = Some(a);
    }

    // Lookup table for sums of up to three ball momenta (exchange shifts).
    let reach = 3 * half;
    let side = (2 * reach + 1) as usize;
    let mut dense_index = vec![-1; side * side * side];
    for (a, j) in points.iter().enumerate() {
        dense_index[dense_offset(*j, reach)] = a as i32;
    }

    Ok(MomentumLattice {
        spec,
        points,
        momenta,
        mask,
        slot,
        reach,
        dense_index,
    })
}

fn grid_offset(j: [i32; 3], n: usize) -> usize {
    (unfold(j[0], n) * n + unfold(j[1], n)) * n + unfold(j[2], n)
}

fn dense_offset(j: [i32; 3], reach: i32) -> usize {
    let side = (2 * reach + 1) as usize;
    let s = |x: i32| (x + reach) as usize;
    (s(j[0]) * side + s(j[1])) * side + s(j[2])
}

impl MomentumLattice {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n_per_axis
    }

    pub fn dk(&self) -> f64 {
        self.spec.dk()
    }

    pub fn volume(&self) -> f64 {
        self.spec.volume()
    }

    pub fn cutoff(&self) -> f64 {
        self.spec.cutoff
    }

    /// Number of retained momenta m.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension 4m of the cutoff spinor space.
    pub fn dim(&self) -> usize {
        4 * self.points.len()
    }

    /// Integer momentum indices of the retained points.
    pub fn points(&self) -> &[[i32; 3]] {
        &self.points
    }

    pub fn momenta(&self) -> &[[f64; 3]] {
        &self.momenta
    }

    /// Cutoff mask over the n³ grid in FFT (unfolded) order.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Position in [`Self::points`] of the grid slot `g` (FFT order).
    pub fn slot(&self, g: usize) -> Option<usize> {
        self.slot[g]
    }

    /// Position of an integer momentum in [`Self::points`], if retained.
    pub fn index_of(&self, j: [i32; 3]) -> Option<usize> {
        if j.iter().any(|x| x.abs() > self.reach) {
            return None;
        }
        let a = self.dense_index[dense_offset(j, self.reach)];
        (a >= 0).then_some(a as usize)
    }

    pub fn same_as(&self, other: &MomentumLattice) -> bool {
        self.spec == other.spec
    }

    pub fn ensure_same(&self, other: &MomentumLattice) -> Result<()> {
        self.ensure_spec(&other.spec)
    }

    pub fn ensure_spec(&self, spec: &LatticeSpec) -> Result<()> {
        if self.spec == *spec {
            Ok(())
        } else {
            Err(BdfError::LatticeMismatch(format!(
                "{:?} vs {:?}",
                self.spec, spec
            )))
        }
    }
}

/// In-place 3-D DFT of an n³ array stored with the last axis fastest.
/// Unnormalized; `inverse` selects the e^{+i} sign.
pub(crate) fn fft3(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n * n);
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // z axis: contiguous rows
    fft.process(data);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    // y axis
    for ix in 0..n {
        for iz in 0..n {
            for iy in 0..n {
                line[iy] = data[(ix * n + iy) * n + iz];
            }
            fft.process(&mut line);
            for iy in 0..n {
                data[(ix * n + iy) * n + iz] = line[iy];
            }
        }
    }
    // x axis
    for iy in 0..n {
        for iz in 0..n {
            for ix in 0..n {
                line[ix] = data[(ix * n + iy) * n + iz];
            }
            fft.process(&mut line);
            for ix in 0..n {
                data[(ix * n + iy) * n + iz] = line[ix];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Position,
    Momentum,
}

/// A 4-spinor per grid point, in either representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    spec: LatticeSpec,
    representation: Representation,
    values: Vec<[Complex64; 4]>,
}

impl SpinorField {
    pub fn zeros(spec: LatticeSpec, representation: Representation) -> Self {
        let n = spec.n_per_axis;
        SpinorField {
            spec,
            representation,
            values: vec![[Complex64::new(0.0, 0.0); 4]; n * n * n],
        }
    }

    pub fn from_values(
        spec: LatticeSpec,
        representation: Representation,
        values: Vec<[Complex64; 4]>,
    ) -> Result<Self> {
        let n = spec.n_per_axis;
        if values.len() != n * n * n {
            return Err(BdfError::InvalidArgument(format!(
                "expected {} grid values, got {}",
                n * n * n,
                values.len()
            )));
        }
        if values
            .iter()
            .flatten()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(BdfError::NonFinite("spinor field values".into()));
        }
        Ok(SpinorField {
            spec,
            representation,
            values,
        })
    }

    /// Momentum-space field built from a vector on the cutoff spinor space.
    pub fn from_ball_vector(lattice: &MomentumLattice, v: &[Complex64]) -> Self {
        assert_eq!(v.len(), lattice.dim());
        let n = lattice.n();
        let mut f = SpinorField::zeros(*lattice.spec(), Representation::Momentum);
        for (a, j) in lattice.points().iter().enumerate() {
            let g = grid_offset(*j, n);
            for s in 0..4 {
                f.values[g][s] = v[4 * a + s];
            }
        }
        f
    }

    /// Restriction to the retained momenta, as a vector of length 4m.
    pub fn to_ball_vector(&self, lattice: &MomentumLattice) -> Vec<Complex64> {
        let f = self.to_momentum();
        let n = lattice.n();
        let mut v = vec![Complex64::new(0.0, 0.0); lattice.dim()];
        for (a, j) in lattice.points().iter().enumerate() {
            let g = grid_offset(*j, n);
            v[4 * a..4 * a + 4].copy_from_slice(&f.values[g]);
        }
        v
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Values in FFT grid order (last axis fastest).
    pub fn values(&self) -> &[[Complex64; 4]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[Complex64; 4]] {
        &mut self.values
    }

    /// Value at the integer grid index `j` (position j·L/n or momentum j·Δk).
    pub fn at(&self, j: [i32; 3]) -> [Complex64; 4] {
        self.values[grid_offset(j, self.spec.n_per_axis)]
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_momentum(&self) -> SpinorField {
        match self.representation {
            Representation::Momentum => self.clone(),
            Representation::Position => self.transformed(false),
        }
    }

    pub fn to_position(&self) -> SpinorField {
        match self.representation {
            Representation::Position => self.clone(),
            Representation::Momentum => self.transformed(true),
        }
    }

    fn transformed(&self, inverse: bool) -> SpinorField {
        let n = self.spec.n_per_axis;
        let scale = (n as f64).powf(-1.5);
        let mut out = self.clone();
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n * n];
        for s in 0..4 {
            for (b, v) in buf.iter_mut().zip(&self.values) {
                *b = v[s];
            }
            fft3(&mut buf, n, inverse);
            for (o, b) in out.values.iter_mut().zip(&buf) {
                o[s] = b * scale;
            }
        }
        out.representation = if inverse {
            Representation::Position
        } else {
            Representation::Momentum
        };
        out
    }
}

/// Zero every momentum component outside the ball, keeping the input's
/// representation.
pub fn cutoff_project(f: &SpinorField) -> SpinorField {
    let n = f.spec.n_per_axis;
    let dk = f.spec.dk();
    let lam2 = f.spec.cutoff * f.spec.cutoff;
    let mut g = f.to_momentum();
    for ix in 0..n {
        for iy in 0..n {
            for iz in 0..n {
                let j = [fold(ix, n), fold(iy, n), fold(iz, n)];
                let k2 = dk * dk * (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]) as f64;
                if k2 > lam2 {
                    g.values[(ix * n + iy) * n + iz] = [Complex64::new(0.0, 0.0); 4];
                }
            }
        }
    }
    match f.representation {
        Representation::Momentum => g,
        Representation::Position => g.to_position(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MomentumLattice {
        build_lattice(LatticeSpec::new(8, 12.0, 2.0)).unwrap()
    }

    #[test]
    fn default_lattice_spacing_and_count() {
        let lat = small();
        assert!((lat.dk() - std::f64::consts::PI / 6.0).abs() < 1e-15);
        // Brute force over all 512 grid momenta.
        let mut count = 0;
        for ix in 0..8 {
            for iy in 0..8 {
                for iz in 0..8 {
                    let k = [fold(ix, 8), fold(iy, 8), fold(iz, 8)].map(|j| j as f64 * lat.dk());
                    if k.iter().map(|x| x * x).sum::<f64>().sqrt() <= 2.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(lat.len(), count);
        assert_eq!(lat.len(), 251);
        assert_eq!(lat.mask().iter().filter(|&&b| b).count(), 251);
        assert_eq!(lat.dim(), 4 * 251);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            build_lattice(LatticeSpec::new(4, 4.0, 10.0)),
            Err(BdfError::InvalidLattice(_))
        ));
        assert!(build_lattice(LatticeSpec::new(7, 12.0, 2.0)).is_err());
        assert!(build_lattice(LatticeSpec::new(8, 12.0, 0.5)).is_err());
        // Ball touching the window edge.
        assert!(build_lattice(LatticeSpec::new(8, 4.0 * std::f64::consts::PI, 1.0)).is_err());
    }

    #[test]
    fn ball_is_symmetric_and_indexable() {
        let lat = small();
        for (a, j) in lat.points().iter().enumerate() {
            assert_eq!(lat.index_of(*j), Some(a));
            assert!(lat.index_of([-j[0], -j[1], -j[2]]).is_some());
        }
        assert_eq!(lat.index_of([4, 0, 0]), None);
        assert_eq!(lat.index_of([12, 12, 12]), None);
        assert_eq!(lat.index_of([13, 0, 0]), None);
    }

    #[test]
    fn constant_field_is_dc_mode() {
        let spec = LatticeSpec::new(8, 12.0, 2.0);
        let one = Complex64::new(1.0, 0.0);
        let f =
            SpinorField::from_values(spec, Representation::Position, vec![[one; 4]; 512]).unwrap();
        let g = f.to_momentum();
        for (i, v) in g.values().iter().enumerate() {
            for c in v {
                if i == 0 {
                    assert!((c - Complex64::new(512f64.sqrt(), 0.0)).norm() < 1e-12);
                } else {
                    assert!(c.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn plane_wave_is_delta() {
        let spec = LatticeSpec::new(8, 12.0, 2.0);
        let k0 = [2, -1, 3];
        let n = 8;
        let h = spec.box_length / n as f64;
        let dk = spec.dk();
        let mut values = Vec::with_capacity(512);
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let phase = dk * h * (k0[0] * ix + k0[1] * iy + k0[2] * iz) as f64;
                    let e = Complex64::from_polar(1.0, phase);
                    values.push([e, e * 2.0, Complex64::new(0.0, 0.0), -e]);
                }
            }
        }
        let f = SpinorField::from_values(spec, Representation::Position, values).unwrap();
        let g = f.to_momentum();
        let peak = g.at(k0);
        assert!((peak[0] - Complex64::new(512f64.sqrt(), 0.0)).norm() < 1e-10);
        assert!((peak[1] - Complex64::new(2.0 * 512f64.sqrt(), 0.0)).norm() < 1e-10);
        let total: f64 = g.values().iter().flatten().map(|c| c.norm_sqr()).sum();
        let at_peak: f64 = peak.iter().map(|c| c.norm_sqr()).sum();
        assert!((total - at_peak).abs() < 1e-9);
    }

    #[test]
    fn ball_vector_round_trip() {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let v: Vec<Complex64> = (0..lat.dim())
            .map(|i| Complex64::new(i as f64, -(i as f64) / 3.0))
            .collect();
        let f = SpinorField::from_ball_vector(&lat, &v);
        assert_eq!(f.to_position().to_ball_vector(&lat).len(), v.len());
        let back = f.to_position().to_ball_vector(&lat);
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn non_finite_values_rejected() {
        let spec = LatticeSpec::new(4, 6.0, 2.0);
        let mut values = vec![[Complex64::new(0.0, 0.0); 4]; 64];
        values[3][1] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(
            SpinorField::from_values(spec, Representation::Position, values),
            Err(BdfError::NonFinite(_))
        ));
    }
}
