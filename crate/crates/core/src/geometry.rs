//! Emitter configurations: chains, rings, ring pairs and positional disorder.
//!
//! Lengths are in units of the transition wavelength and rates in units of the
//! single-emitter decay rate unless an [`EmitterArray`] says otherwise.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Minimum allowed distance between two emitters.
pub const MIN_SEPARATION: f64 = 1e-9;

const NORM_TOL: f64 = 1e-12;
const DISORDER_RETRIES: usize = 100;

/// Positions and dipole orientations of `N` identical two-level emitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterArray {
    positions: Vec<Vec3>,
    orientations: Vec<Vec3>,
    gamma0: f64,
    lambda0: f64,
}

impl EmitterArray {
    /// Builds an array with `gamma0 = lambda0 = 1`.
    pub fn new(positions: Vec<Vec3>, orientations: Vec<Vec3>) -> Result<Self> {
        Self::with_constants(positions, orientations, 1.0, 1.0)
    }

    pub fn with_constants(
        positions: Vec<Vec3>,
        orientations: Vec<Vec3>,
        gamma0: f64,
        lambda0: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("an array needs at least one emitter".into()));
        }
        if positions.len() != orientations.len() {
            return Err(Error::InvalidArgument(format!(
                "{} positions but {} orientations",
                positions.len(),
                orientations.len()
            )));
        }
        if !(gamma0 > 0.0 && gamma0.is_finite()) || !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(Error::InvalidArgument(
                "gamma0 and lambda0 must be positive and finite".into(),
            ));
        }
        for (i, mu) in orientations.iter().enumerate() {
            if (mu.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "orientation {i} has norm {} (must be a unit vector)",
                    mu.norm()
                )));
            }
        }
        if positions.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("non-finite emitter position".into()));
        }
        if let Some((i, j)) = first_overlap(&positions) {
            return Err(Error::InvalidArgument(format!(
                "emitters {i} and {j} coincide (separation below {MIN_SEPARATION})"
            )));
        }
        Ok(Self {
            positions,
            orientations,
            gamma0,
            lambda0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn orientations(&self) -> &[Vec3] {
        &self.orientations
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Transition wavenumber `2π/λ₀`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.lambda0
    }

    /// Concatenates two arrays sharing the same emitter constants.
    pub fn concat(&self, other: &EmitterArray) -> Result<EmitterArray> {
        if self.gamma0 != other.gamma0 || self.lambda0 != other.lambda0 {
            return Err(Error::InvalidArgument(
                "cannot join arrays with different emitter constants".into(),
            ));
        }
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut orientations = self.orientations.clone();
        orientations.extend_from_slice(&other.orientations);
        EmitterArray::with_constants(positions, orientations, self.gamma0, self.lambda0)
    }

    /// Sub-array made of the listed emitters, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<EmitterArray> {
        let mut positions = Vec::with_capacity(indices.len());
        let mut orientations = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            positions.push(self.positions[i]);
            orientations.push(self.orientations[i]);
        }
        EmitterArray::with_constants(positions, orientations, self.gamma0, self.lambda0)
    }

    /// Smallest pairwise distance, `None` for a single emitter.
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let r = (self.positions[i] - self.positions[j]).norm();
                best = Some(best.map_or(r, |b| b.min(r)));
            }
        }
        best
    }
}

fn first_overlap(positions: &[Vec3]) -> Option<(usize, usize)> {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if (positions[i] - positions[j]).norm() <= MIN_SEPARATION {
                return Some((i, j));
            }
        }
    }
    None
}

fn unit(v: Vec3, name: &str) -> Result<Vec3> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be a non-zero vector")));
    }
    Ok(v / n)
}

/// Two unit vectors spanning the plane orthogonal to `normal`.
///
/// For the coordinate axes the basis is the obvious one (ẑ → x̂, ŷ), so rings
/// in the xy-plane start on the x axis.
fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let seed = if normal.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = (seed - normal * normal.dot(&seed)).normalize();
    let e2 = normal.cross(&e1);
    (e1, e2)
}

/// Regular chain of `n` emitters spaced by `d` along `axis`, centred at the
/// origin, all sharing one dipole orientation.
pub fn make_chain(n: usize, d: f64, axis: Vec3, orientation: Vec3) -> Result<EmitterArray> {
    make_chain_with(n, d, axis, orientation, true)
}

/// As [`make_chain`]; `centered = false` puts the first emitter at the origin.
pub fn make_chain_with(
    n: usize,
    d: f64,
    axis: Vec3,
    orientation: Vec3,
    centered: bool,
) -> Result<EmitterArray> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs n >= 1".into()));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("chain spacing must be positive, got {d}")));
    }
    let axis = unit(axis, "chain axis")?;
    let mu = unit(orientation, "dipole orientation")?;
    let offset = if centered { (n as f64 - 1.0) / 2.0 } else { 0.0 };
    let positions = (0..n).map(|j| axis * ((j as f64 - offset) * d)).collect();
    EmitterArray::new(positions, vec![mu; n])
}

/// Radius of a regular `n`-gon with nearest-neighbour chord `d`.
pub fn ring_radius(n: usize, d: f64) -> f64 {
    d / (2.0 * (PI / n as f64).sin())
}

/// Regular ring of `n` emitters with nearest-neighbour chord length `d`,
/// lying in the plane orthogonal to `normal` and centred at the origin.
///
/// Emitter `j` sits at angle `2πj/n`.
pub fn make_ring(n: usize, d: f64, normal: Vec3, orientation: Vec3) -> Result<EmitterArray> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("ring needs n >= 2, got {n}")));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("ring spacing must be positive, got {d}")));
    }
    let normal = unit(normal, "ring normal")?;
    let mu = unit(orientation, "dipole orientation")?;
    let radius = ring_radius(n, d);
    let (e1, e2) = plane_basis(&normal);
    let positions = (0..n)
        .map(|j| {
            let phi = ring_angle(n, j);
            (e1 * phi.cos() + e2 * phi.sin()) * radius
        })
        .collect();
    EmitterArray::new(positions, vec![mu; n])
}

/// Angular position of emitter `j` on an `n`-ring.
pub fn ring_angle(n: usize, j: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

/// Two rings side by side along x: the driven ring is tagged first.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPair {
    pub array: EmitterArray,
    pub driven: Vec<usize>,
    pub undriven: Vec<usize>,
}

/// Driven ring centred at `(-s/2, 0, 0)` in the xy-plane and an undriven ring
/// centred at `(+s/2, 0, 0)` whose plane is rotated by `tilt_angle` about the
/// y axis through its centre.
///
/// Undriven dipoles point along ẑ; driven dipoles along `normalize((ε, 0, 1))`
/// with `ε = orientation_tilt_x`.
pub fn make_ring_pair(
    n_driven: usize,
    n_undriven: usize,
    d: f64,
    center_separation: f64,
    tilt_angle: f64,
    orientation_tilt_x: f64,
) -> Result<RingPair> {
    if !center_separation.is_finite() || !tilt_angle.is_finite() || !orientation_tilt_x.is_finite()
    {
        return Err(Error::InvalidArgument("ring pair parameters must be finite".into()));
    }
    let driven_mu = Vec3::new(orientation_tilt_x, 0.0, 1.0).normalize();
    let driven = make_ring(n_driven, d, Vec3::z(), driven_mu)?;
    let (s, c) = tilt_angle.sin_cos();
    // rotation about y
    let rotate = |v: &Vec3| Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z);
    let undriven = make_ring(n_undriven, d, Vec3::z(), Vec3::z())?;

    let left = Vec3::new(-center_separation / 2.0, 0.0, 0.0);
    let right = Vec3::new(center_separation / 2.0, 0.0, 0.0);
    let mut positions: Vec<Vec3> = driven.positions().iter().map(|p| p + left).collect();
    positions.extend(undriven.positions().iter().map(|p| rotate(p) + right));
    let mut orientations = driven.orientations().to_vec();
    orientations.extend_from_slice(undriven.orientations());

    if first_overlap(&positions).is_some() {
        return Err(Error::InvalidArgument(
            "rings overlap: emitters of the two rings coincide".into(),
        ));
    }
    let array = EmitterArray::new(positions, orientations)?;
    Ok(RingPair {
        array,
        driven: (0..n_driven).collect(),
        undriven: (n_driven..n_driven + n_undriven).collect(),
    })
}

/// Displaces every emitter in x and y by independent uniform draws from
/// `[-d·ε, d·ε]`. Deterministic for a fixed `seed`; z and orientations are
/// untouched.
///
/// A draw that makes two emitters coincide is redrawn for the whole array, at
/// most a fixed number of times.
pub fn apply_disorder(array: &EmitterArray, epsilon: f64, d: f64, seed: u64) -> Result<EmitterArray> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("disorder epsilon must be >= 0, got {epsilon}")));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument(format!("disorder spacing must be positive, got {d}")));
    }
    if epsilon == 0.0 {
        return Ok(array.clone());
    }
    let amplitude = d * epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..DISORDER_RETRIES {
        let positions: Vec<Vec3> = array
            .positions()
            .iter()
            .map(|p| {
                let dx = rng.random_range(-amplitude..=amplitude);
                let dy = rng.random_range(-amplitude..=amplitude);
                Vec3::new(p.x + dx, p.y + dy, p.z)
            })
            .collect();
        if first_overlap(&positions).is_none() {
            return EmitterArray::with_constants(
                positions,
                array.orientations().to_vec(),
                array.gamma0(),
                array.lambda0(),
            );
        }
    }
    Err(Error::InvalidArgument(format!(
        "disorder produced coincident emitters in {DISORDER_RETRIES} consecutive draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn single_emitter_chain_is_at_origin() {
        let a = make_chain(1, 0.05, Vec3::y(), Vec3::z()).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.positions()[0], Vec3::zeros());
    }

    #[test]
    fn three_chain_is_centred() {
        let a = make_chain(3, 0.1, Vec3::y(), Vec3::z()).unwrap();
        let ys: Vec<f64> = a.positions().iter().map(|p| p.y).collect();
        assert_abs_diff_eq!(ys[0], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(ys[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ys[2], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn thirty_chain_length() {
        let a = make_chain(30, 1.0 / 40.0, Vec3::y(), Vec3::z()).unwrap();
        let len = (a.positions()[29] - a.positions()[0]).norm();
        assert_abs_diff_eq!(len, 29.0 / 40.0, epsilon = 1e-14);
        let centroid: Vec3 = a.positions().iter().sum::<Vec3>() / 30.0;
        assert!(centroid.norm() < 1e-15);
    }

    #[test]
    fn uncentred_chain_starts_at_origin() {
        let a = make_chain_with(4, 0.2, Vec3::x(), Vec3::z(), false).unwrap();
        assert_eq!(a.positions()[0], Vec3::zeros());
        assert_abs_diff_eq!(a.positions()[3].x, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn zero_vectors_are_rejected() {
        assert!(matches!(
            make_chain(3, 0.1, Vec3::zeros(), Vec3::z()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            make_chain(3, 0.1, Vec3::y(), Vec3::zeros()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(make_chain(0, 0.1, Vec3::y(), Vec3::z()).is_err());
        assert!(make_chain(2, 0.0, Vec3::y(), Vec3::z()).is_err());
    }

    #[test]
    fn array_invariants_are_checked() {
        let p = vec![Vec3::zeros(), Vec3::zeros()];
        assert!(EmitterArray::new(p, vec![Vec3::z(); 2]).is_err());
        let p = vec![Vec3::zeros()];
        assert!(EmitterArray::new(p.clone(), vec![Vec3::new(0.0, 0.0, 1.1)]).is_err());
        assert!(EmitterArray::new(vec![], vec![]).is_err());
    }

    #[test]
    fn ring_radii() {
        let r4 = make_ring(4, 0.02, Vec3::z(), Vec3::z()).unwrap();
        assert_abs_diff_eq!(r4.positions()[0].norm(), 0.02 / 2f64.sqrt(), epsilon = 1e-15);
        let r6 = make_ring(6, 0.05, Vec3::z(), Vec3::z()).unwrap();
        assert_abs_diff_eq!(r6.positions()[0].norm(), 0.05, epsilon = 1e-15);
        let r2 = make_ring(2, 0.1, Vec3::z(), Vec3::z()).unwrap();
        assert_abs_diff_eq!(
            (r2.positions()[0] - r2.positions()[1]).norm(),
            0.1,
            epsilon = 1e-15
        );
        assert!(make_ring(1, 0.1, Vec3::z(), Vec3::z()).is_err());
    }

    #[test]
    fn ring_pair_layout() {
        let pair = make_ring_pair(4, 4, 0.02, 0.7, PI / 4.0, 0.0).unwrap();
        assert_eq!(pair.array.len(), 8);
        assert_eq!(pair.driven, vec![0, 1, 2, 3]);
        assert_eq!(pair.undriven, vec![4, 5, 6, 7]);
        let centre = |idx: &[usize]| -> Vec3 {
            idx.iter().map(|&i| pair.array.positions()[i]).sum::<Vec3>() / idx.len() as f64
        };
        assert_abs_diff_eq!((centre(&pair.undriven) - centre(&pair.driven)).norm(), 0.7, epsilon = 1e-14);
        // second ring plane is tilted: its emitters acquire z components
        assert!(pair.undriven.iter().any(|&i| pair.array.positions()[i].z.abs() > 1e-3));

        let tilted = make_ring_pair(4, 4, 0.02, 0.7, PI / 4.0, 0.1).unwrap();
        let mu = tilted.array.orientations()[0];
        assert_abs_diff_eq!(mu.x / mu.z, 0.1, epsilon = 1e-14);
        assert_eq!(tilted.array.orientations()[5], Vec3::z());

        assert!(make_ring_pair(2, 2, 0.05, 5.0, 0.0, 0.0).is_ok());
        assert!(make_ring_pair(4, 4, 0.02, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn disorder_bounds_and_determinism() {
        let d = 1.0 / 40.0;
        let chain = make_chain(10, d, Vec3::y(), Vec3::z()).unwrap();
        let a = apply_disorder(&chain, 0.1, d, 1).unwrap();
        let b = apply_disorder(&chain, 0.1, d, 1).unwrap();
        assert_eq!(a, b);
        for (p, q) in a.positions().iter().zip(chain.positions()) {
            assert!((p.x - q.x).abs() <= d / 10.0);
            assert!((p.y - q.y).abs() <= d / 10.0);
            assert_eq!(p.z, q.z);
        }
        assert_ne!(a, apply_disorder(&chain, 0.1, d, 2).unwrap());
        assert_eq!(apply_disorder(&chain, 0.0, d, 7).unwrap(), chain);
        assert!(apply_disorder(&chain, -0.1, d, 7).is_err());
    }

    proptest! {
        #[test]
        fn ring_neighbours_are_equidistant(n in 2usize..40, d in 0.001f64..0.5) {
            let ring = make_ring(n, d, Vec3::z(), Vec3::z()).unwrap();
            for j in 0..n {
                let r = (ring.positions()[j] - ring.positions()[(j + 1) % n]).norm();
                prop_assert!((r - d).abs() < 1e-12);
            }
        }

        #[test]
        fn disorder_keeps_z(seed in any::<u64>(), eps in 0.0f64..0.3) {
            let chain = make_chain(6, 0.05, Vec3::new(1.0, 1.0, 1.0), Vec3::z()).unwrap();
            let out = apply_disorder(&chain, eps, 0.05, seed).unwrap();
            for (p, q) in out.positions().iter().zip(chain.positions()) {
                prop_assert_eq!(p.z, q.z);
            }
            prop_assert_eq!(out.orientations(), chain.orientations());
        }
    }
}
