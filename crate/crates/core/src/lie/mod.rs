//! Matrix Lie groups used by the filters: SO(3), SE(3), SE₂(3), the
//! translation group ℝⁿ and block-diagonal composites of these.
//!
//! Tangent coordinates put translational parts first:
//!
//! * SE(3): `(ρ, φ)`, embedded as `[[R, p], [0, 1]]`;
//! * SE₂(3): `(ρ_p, φ, ρ_v)`, embedded as `[[R, p, v], [0, 1, 0], [0, 0, 1]]`;
//! * ℝⁿ: `b`, embedded as `[[Iₙ, b], [0, 1]]`.
//!
//! `exp_hat` and `log_vee` use the closed forms (Rodrigues plus the SO(3)
//! left Jacobian on translational columns), which agree with the dense
//! matrix exponential of `hat(a)`.

pub mod so3;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

/// Tolerance for the structural pattern of algebra elements passed to `vee`.
pub const PATTERN_TOL: f64 = 1e-12;

/// Rotation blocks are re-projected onto SO(3) when ‖RᵀR − I‖∞ exceeds this.
pub const RENORMALIZE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("group mismatch: {left:?} vs {right:?}")]
    GroupMismatch { left: GroupId, right: GroupId },
    #[error("matrix is not in the Lie algebra of {group:?} (deviation {deviation:e})")]
    Pattern { group: GroupId, deviation: f64 },
    #[error("rotation angle {angle} is too close to π for the principal logarithm")]
    Branch { angle: f64 },
}

/// Identifies a matrix Lie group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupId {
    SO3,
    SE3,
    SE23,
    Vec(usize),
    Composite(Vec<GroupId>),
}

impl GroupId {
    /// The KIO state group `SE₂(3) × SE(3) × SE(3) × ℝ⁶` (20×20, 27 dof).
    pub fn kio_state() -> Self {
        GroupId::Composite(vec![GroupId::SE23, GroupId::SE3, GroupId::SE3, GroupId::Vec(6)])
    }

    /// Side length of the square matrix embedding.
    pub fn matrix_dim(&self) -> usize {
        match self {
            GroupId::SO3 => 3,
            GroupId::SE3 => 4,
            GroupId::SE23 => 5,
            GroupId::Vec(n) => n + 1,
            GroupId::Composite(members) => members.iter().map(GroupId::matrix_dim).sum(),
        }
    }

    /// Tangent-space dimension.
    pub fn dof(&self) -> usize {
        match self {
            GroupId::SO3 => 3,
            GroupId::SE3 => 6,
            GroupId::SE23 => 9,
            GroupId::Vec(n) => *n,
            GroupId::Composite(members) => members.iter().map(GroupId::dof).sum(),
        }
    }

    /// Member groups with their (matrix, tangent) offsets. A simple group
    /// yields itself at offset zero.
    pub fn blocks(&self) -> Vec<(&GroupId, usize, usize)> {
        match self {
            GroupId::Composite(members) => {
                let mut out = Vec::with_capacity(members.len());
                let (mut m, mut t) = (0, 0);
                for g in members {
                    out.push((g, m, t));
                    m += g.matrix_dim();
                    t += g.dof();
                }
                out
            }
            g => vec![(g, 0, 0)],
        }
    }

    fn check_len(&self, len: usize) -> Result<(), LieError> {
        if len != self.dof() {
            return Err(LieError::Dimension { expected: self.dof(), got: len });
        }
        Ok(())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            group: self.clone(),
            matrix: DMatrix::identity(self.matrix_dim(), self.matrix_dim()),
        }
    }

    pub fn zero_tangent(&self) -> TangentVector {
        TangentVector { group: self.clone(), coords: DVector::zeros(self.dof()) }
    }

    pub fn tangent(&self, coords: DVector<f64>) -> Result<TangentVector, LieError> {
        self.check_len(coords.len())?;
        Ok(TangentVector { group: self.clone(), coords })
    }

    /// Wraps a matrix as an element of this group. Only the shape is checked.
    pub fn element(&self, matrix: DMatrix<f64>) -> Result<GroupElement, LieError> {
        let n = self.matrix_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(LieError::Dimension { expected: n, got: matrix.nrows() });
        }
        Ok(GroupElement { group: self.clone(), matrix })
    }

    /// Algebra element for tangent coordinates `a`.
    pub fn hat(&self, a: &[f64]) -> Result<DMatrix<f64>, LieError> {
        self.check_len(a.len())?;
        let n = self.matrix_dim();
        let mut m = DMatrix::zeros(n, n);
        for (g, mo, to) in self.blocks() {
            let a = &a[to..to + g.dof()];
            match g {
                GroupId::SO3 => set3(&mut m, mo, mo, &so3::skew(&v3(a, 0))),
                GroupId::SE3 => {
                    set3(&mut m, mo, mo, &so3::skew(&v3(a, 3)));
                    setv(&mut m, mo, mo + 3, &v3(a, 0));
                }
                GroupId::SE23 => {
                    set3(&mut m, mo, mo, &so3::skew(&v3(a, 3)));
                    setv(&mut m, mo, mo + 3, &v3(a, 0));
                    setv(&mut m, mo, mo + 4, &v3(a, 6));
                }
                GroupId::Vec(k) => {
                    for i in 0..*k {
                        m[(mo + i, mo + k)] = a[i];
                    }
                }
                GroupId::Composite(_) => unreachable!("nested composites are flattened by blocks()"),
            }
        }
        Ok(m)
    }

    /// Inverse of [`hat`](Self::hat); rejects matrices outside the algebra.
    pub fn vee(&self, m: &DMatrix<f64>) -> Result<DVector<f64>, LieError> {
        let n = self.matrix_dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(LieError::Dimension { expected: n, got: m.nrows() });
        }
        let mut out = DVector::zeros(self.dof());
        for (g, mo, to) in self.blocks() {
            match g {
                GroupId::SO3 | GroupId::SE3 | GroupId::SE23 => {
                    let s = get3(m, mo, mo);
                    let w = Vector3::new(
                        0.5 * (s[(2, 1)] - s[(1, 2)]),
                        0.5 * (s[(0, 2)] - s[(2, 0)]),
                        0.5 * (s[(1, 0)] - s[(0, 1)]),
                    );
                    let rot_at = if *g == GroupId::SO3 { to } else { to + 3 };
                    out.rows_mut(rot_at, 3).copy_from(&w);
                    if *g != GroupId::SO3 {
                        out.rows_mut(to, 3).copy_from(&getv(m, mo, mo + 3));
                    }
                    if *g == GroupId::SE23 {
                        out.rows_mut(to + 6, 3).copy_from(&getv(m, mo, mo + 4));
                    }
                }
                GroupId::Vec(k) => {
                    for i in 0..*k {
                        out[to + i] = m[(mo + i, mo + k)];
                    }
                }
                GroupId::Composite(_) => unreachable!(),
            }
        }
        let expected = self.hat(out.as_slice())?;
        let deviation = (m - expected).amax();
        if deviation > PATTERN_TOL {
            return Err(LieError::Pattern { group: self.clone(), deviation });
        }
        Ok(out)
    }

    /// Exponential map from tangent coordinates straight to the group.
    pub fn exp_hat(&self, a: &[f64]) -> Result<GroupElement, LieError> {
        self.check_len(a.len())?;
        let n = self.matrix_dim();
        let mut m = DMatrix::identity(n, n);
        for (g, mo, to) in self.blocks() {
            let a = &a[to..to + g.dof()];
            match g {
                GroupId::SO3 => set3(&mut m, mo, mo, &so3::exp(&v3(a, 0))),
                GroupId::SE3 | GroupId::SE23 => {
                    let phi = v3(a, 3);
                    let jl = so3::left_jacobian(&phi);
                    set3(&mut m, mo, mo, &so3::exp(&phi));
                    setv(&mut m, mo, mo + 3, &(jl * v3(a, 0)));
                    if *g == GroupId::SE23 {
                        setv(&mut m, mo, mo + 4, &(jl * v3(a, 6)));
                    }
                }
                GroupId::Vec(k) => {
                    for i in 0..*k {
                        m[(mo + i, mo + k)] = a[i];
                    }
                }
                GroupId::Composite(_) => unreachable!(),
            }
        }
        Ok(GroupElement { group: self.clone(), matrix: m })
    }

    /// Left Jacobian `J_l(a)`.
    pub fn left_jacobian(&self, a: &[f64]) -> Result<DMatrix<f64>, LieError> {
        self.check_len(a.len())?;
        let p = self.dof();
        let mut j = DMatrix::identity(p, p);
        for (g, _, to) in self.blocks() {
            let a = &a[to..to + g.dof()];
            match g {
                GroupId::SO3 => set3(&mut j, to, to, &so3::left_jacobian(&v3(a, 0))),
                GroupId::SE3 | GroupId::SE23 => {
                    let phi = v3(a, 3);
                    let jl = so3::left_jacobian(&phi);
                    set3(&mut j, to, to, &jl);
                    set3(&mut j, to + 3, to + 3, &jl);
                    set3(&mut j, to, to + 3, &so3::q_block(&v3(a, 0), &phi));
                    if *g == GroupId::SE23 {
                        set3(&mut j, to + 6, to + 6, &jl);
                        set3(&mut j, to + 6, to + 3, &so3::q_block(&v3(a, 6), &phi));
                    }
                }
                GroupId::Vec(_) => {}
                GroupId::Composite(_) => unreachable!(),
            }
        }
        Ok(j)
    }

    /// Right Jacobian, `J_r(a) = J_l(−a)`.
    pub fn right_jacobian(&self, a: &[f64]) -> Result<DMatrix<f64>, LieError> {
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        self.left_jacobian(&neg)
    }
}

/// An element of a matrix Lie group in its matrix embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub group: GroupId,
    pub matrix: DMatrix<f64>,
}

/// Tangent-space coordinates tagged with their group.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub group: GroupId,
    pub coords: DVector<f64>,
}

impl TangentVector {
    pub fn hat(&self) -> Result<DMatrix<f64>, LieError> {
        self.group.hat(self.coords.as_slice())
    }

    pub fn exp(&self) -> Result<GroupElement, LieError> {
        self.group.exp_hat(self.coords.as_slice())
    }
}

impl GroupElement {
    fn same_group(&self, other: &GroupElement) -> Result<(), LieError> {
        if self.group != other.group {
            return Err(LieError::GroupMismatch { left: self.group.clone(), right: other.group.clone() });
        }
        Ok(())
    }

    /// `self · other`, with rotation blocks re-projected onto SO(3) when
    /// they drift past [`RENORMALIZE_TOL`].
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement, LieError> {
        self.same_group(other)?;
        let mut out = GroupElement { group: self.group.clone(), matrix: &self.matrix * &other.matrix };
        out.renormalize();
        Ok(out)
    }

    /// Block-structured inverse (rotation transpose, no general inversion).
    pub fn inverse(&self) -> GroupElement {
        let mut m = DMatrix::identity(self.matrix.nrows(), self.matrix.ncols());
        for (g, mo, _) in self.group.blocks() {
            match g {
                GroupId::SO3 => set3(&mut m, mo, mo, &get3(&self.matrix, mo, mo).transpose()),
                GroupId::SE3 | GroupId::SE23 => {
                    let rt = get3(&self.matrix, mo, mo).transpose();
                    set3(&mut m, mo, mo, &rt);
                    let cols = if *g == GroupId::SE3 { 1 } else { 2 };
                    for c in 0..cols {
                        let t = getv(&self.matrix, mo, mo + 3 + c);
                        setv(&mut m, mo, mo + 3 + c, &(-(rt * t)));
                    }
                }
                GroupId::Vec(k) => {
                    for i in 0..*k {
                        m[(mo + i, mo + k)] = -self.matrix[(mo + i, mo + k)];
                    }
                }
                GroupId::Composite(_) => unreachable!(),
            }
        }
        GroupElement { group: self.group.clone(), matrix: m }
    }

    /// Principal-branch logarithm in tangent coordinates.
    pub fn log_vee(&self) -> Result<DVector<f64>, LieError> {
        let mut out = DVector::zeros(self.group.dof());
        for (g, mo, to) in self.group.blocks() {
            match g {
                GroupId::SO3 => {
                    out.rows_mut(to, 3).copy_from(&so3::log(&get3(&self.matrix, mo, mo))?);
                }
                GroupId::SE3 | GroupId::SE23 => {
                    let phi = so3::log(&get3(&self.matrix, mo, mo))?;
                    let jinv = so3::left_jacobian_inverse(&phi);
                    out.rows_mut(to + 3, 3).copy_from(&phi);
                    out.rows_mut(to, 3).copy_from(&(jinv * getv(&self.matrix, mo, mo + 3)));
                    if *g == GroupId::SE23 {
                        out.rows_mut(to + 6, 3).copy_from(&(jinv * getv(&self.matrix, mo, mo + 4)));
                    }
                }
                GroupId::Vec(k) => {
                    for i in 0..*k {
                        out[to + i] = self.matrix[(mo + i, mo + k)];
                    }
                }
                GroupId::Composite(_) => unreachable!(),
            }
        }
        Ok(out)
    }

    /// Adjoint matrix, `Ad_X a = vee(X hat(a) X⁻¹)`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let p = self.group.dof();
        let mut ad = DMatrix::identity(p, p);
        for (g, mo, to) in self.group.blocks() {
            match g {
                GroupId::SO3 => set3(&mut ad, to, to, &get3(&self.matrix, mo, mo)),
                GroupId::SE3 | GroupId::SE23 => {
                    let r = get3(&self.matrix, mo, mo);
                    let pos = getv(&self.matrix, mo, mo + 3);
                    set3(&mut ad, to, to, &r);
                    set3(&mut ad, to + 3, to + 3, &r);
                    set3(&mut ad, to, to + 3, &(so3::skew(&pos) * r));
                    if *g == GroupId::SE23 {
                        let vel = getv(&self.matrix, mo, mo + 4);
                        set3(&mut ad, to + 6, to + 6, &r);
                        set3(&mut ad, to + 6, to + 3, &(so3::skew(&vel) * r));
                    }
                }
                GroupId::Vec(_) => {}
                GroupId::Composite(_) => unreachable!(),
            }
        }
        ad
    }

    /// Rotation blocks `(matrix offset, R)` of this element.
    pub fn rotation_blocks(&self) -> Vec<(usize, Matrix3<f64>)> {
        self.group
            .blocks()
            .into_iter()
            .filter(|(g, _, _)| matches!(g, GroupId::SO3 | GroupId::SE3 | GroupId::SE23))
            .map(|(_, mo, _)| (mo, get3(&self.matrix, mo, mo)))
            .collect()
    }

    /// Re-projects drifting rotation blocks onto SO(3).
    pub fn renormalize(&mut self) {
        for (mo, r) in self.rotation_blocks() {
            if so3::orthonormality_defect(&r) > RENORMALIZE_TOL {
                set3(&mut self.matrix, mo, mo, &so3::project(&r));
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn v3(a: &[f64], at: usize) -> Vector3<f64> {
    Vector3::new(a[at], a[at + 1], a[at + 2])
}

pub(crate) fn get3(m: &DMatrix<f64>, r: usize, c: usize) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(r, c).into_owned()
}

pub(crate) fn set3(m: &mut DMatrix<f64>, r: usize, c: usize, b: &Matrix3<f64>) {
    m.fixed_view_mut::<3, 3>(r, c).copy_from(b);
}

pub(crate) fn getv(m: &DMatrix<f64>, r: usize, c: usize) -> Vector3<f64> {
    m.fixed_view::<3, 1>(r, c).into_owned()
}

pub(crate) fn setv(m: &mut DMatrix<f64>, r: usize, c: usize, v: &Vector3<f64>) {
    m.fixed_view_mut::<3, 1>(r, c).copy_from(v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn kio_group_shape() {
        let g = GroupId::kio_state();
        assert_eq!(g.matrix_dim(), 20);
        assert_eq!(g.dof(), 27);
    }

    #[test]
    fn hat_of_zero_is_zero() {
        assert_eq!(GroupId::SO3.hat(&[0.0; 3]).unwrap(), DMatrix::zeros(3, 3));
        assert_eq!(GroupId::SO3.vee(&DMatrix::zeros(3, 3)).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn hat_so3_rows() {
        let m = GroupId::SO3.hat(&[1.0, 2.0, 3.0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., -3., 2., 3., 0., -1., -2., 1., 0.]);
        assert_eq!(m, expected);
        assert_eq!(GroupId::SO3.vee(&m).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn hat_rejects_wrong_length() {
        assert_eq!(
            GroupId::SE3.hat(&[0.0; 5]),
            Err(LieError::Dimension { expected: 6, got: 5 })
        );
    }

    #[test]
    fn vee_rejects_non_algebra() {
        let mut m = GroupId::SE3.hat(&[1., 2., 3., 0.1, 0.2, 0.3]).unwrap();
        m[(3, 0)] = 1e-6;
        assert!(matches!(GroupId::SE3.vee(&m), Err(LieError::Pattern { .. })));
        let mut m = GroupId::SO3.hat(&[0.1, 0.2, 0.3]).unwrap();
        m[(0, 0)] = 1e-3;
        assert!(matches!(GroupId::SO3.vee(&m), Err(LieError::Pattern { .. })));
    }

    #[test]
    fn exp_so3_examples() {
        assert_eq!(GroupId::SO3.exp_hat(&[0.0; 3]).unwrap().matrix, DMatrix::identity(3, 3));
        let r = GroupId::SO3.exp_hat(&[FRAC_PI_2, 0.0, 0.0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., -1., 0., 1., 0.]);
        assert_relative_eq!(r.matrix, expected, epsilon = 1e-15);
    }

    #[test]
    fn log_small_rotation() {
        let r = GroupId::SO3.exp_hat(&[0.1, -0.2, 0.3]).unwrap();
        assert_relative_eq!(
            r.log_vee().unwrap(),
            DVector::from_column_slice(&[0.1, -0.2, 0.3]),
            epsilon = 1e-15
        );
        assert_eq!(GroupId::SE23.identity().log_vee().unwrap(), DVector::zeros(9));
    }

    #[test]
    fn identity_adjoint_and_jacobian() {
        let g = GroupId::kio_state();
        assert_eq!(g.identity().adjoint(), DMatrix::identity(27, 27));
        assert_eq!(g.left_jacobian(&[0.0; 27]).unwrap(), DMatrix::identity(27, 27));
    }

    #[test]
    fn so3_adjoint_is_rotation() {
        let r = GroupId::SO3.exp_hat(&[0.3, 0.1, -0.7]).unwrap();
        assert_eq!(r.adjoint(), r.matrix);
    }

    #[test]
    fn compose_rejects_mismatch() {
        let a = GroupId::SE3.identity();
        let b = GroupId::SE23.identity();
        assert!(matches!(a.compose(&b), Err(LieError::GroupMismatch { .. })));
    }

    #[test]
    fn vec_group_is_additive() {
        let g = GroupId::Vec(2);
        let a = g.exp_hat(&[1.0, -2.0]).unwrap();
        let b = g.exp_hat(&[0.5, 0.5]).unwrap();
        let c = a.compose(&b).unwrap();
        assert_eq!(c.log_vee().unwrap().as_slice(), &[1.5, -1.5]);
        assert_eq!(a.inverse().log_vee().unwrap().as_slice(), &[-1.0, 2.0]);
    }
}
