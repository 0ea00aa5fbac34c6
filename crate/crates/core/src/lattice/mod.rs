//! Exact lattice algebra: bases, volumes, duals, fundamental regions, modulo
//! reduction, nearest-point quantization and coset enumeration.

mod cvp;
mod hnf;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) use cvp::EnumContext;
pub(crate) use hnf::column_hnf;

/// Largest dimension for which exact sphere-enumeration CVP is attempted.
pub const DEFAULT_CVP_LIMIT: usize = 12;
/// Default cap on quotient-group enumeration.
pub const DEFAULT_INDEX_LIMIT: u64 = 1_000_000;
/// Coordinates within this distance of an integer count as lattice membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A full-rank lattice in R^n given by the columns of its basis matrix.
///
/// Volume, inverse basis and the QR factor used for enumeration are computed
/// once at construction; the value is immutable afterwards.
#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    basis: DMatrix<f64>,
    inverse_basis: DMatrix<f64>,
    volume: f64,
    ctx: EnumContext,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis
    }
}

/// Outcome of reducing a point modulo a fundamental region.
#[derive(Debug, Clone)]
pub struct Reduction {
    /// Representative inside the region; `residue + lattice_point = x`.
    pub residue: DVector<f64>,
    /// The quantization of x with respect to the region.
    pub lattice_point: DVector<f64>,
    /// Integer coordinates of `lattice_point` in the lattice basis.
    pub coords: Vec<i64>,
}

/// The two fundamental regions the protocol uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RegionKind {
    Parallelepiped,
    Voronoi,
}

/// A fundamental region bound to its lattice.
#[derive(Debug, Clone)]
pub struct FundamentalRegion {
    kind: RegionKind,
    lattice: Lattice,
}

impl FundamentalRegion {
    pub fn new(kind: RegionKind, lattice: &Lattice) -> Self {
        FundamentalRegion { kind, lattice: lattice.clone() }
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn reduce(&self, x: &DVector<f64>) -> Result<Reduction> {
        self.lattice.reduce(self.kind, x)
    }
}

impl Lattice {
    /// Builds a lattice from a square basis matrix (columns are generators).
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let dim = basis.nrows();
        if dim == 0 || basis.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim.max(1), got: basis.ncols() });
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("basis entries must be finite".into()));
        }
        let det = basis.clone().lu().determinant();
        // Hadamard bound keeps the singularity threshold scale free
        let scale: f64 = (0..dim).map(|j| basis.column(j).norm()).product();
        let tol = 1e-12 * scale;
        if !(det.abs() > tol) {
            return Err(Error::SingularBasis { det: det.abs(), tol });
        }
        let inverse_basis = basis
            .clone()
            .try_inverse()
            .ok_or(Error::SingularBasis { det: det.abs(), tol })?;
        let ctx = EnumContext::new(&basis);
        Ok(Lattice { dim, basis, inverse_basis, volume: det.abs(), ctx })
    }

    /// Z^n.
    pub fn integers(dim: usize) -> Self {
        Lattice::from_basis(DMatrix::identity(dim, dim)).expect("identity basis")
    }

    /// (alpha Z)^n.
    pub fn scaled_integers(alpha: f64, dim: usize) -> Result<Self> {
        Lattice::from_basis(DMatrix::identity(dim, dim) * alpha)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn inverse_basis(&self) -> &DMatrix<f64> {
        &self.inverse_basis
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// The dual lattice, generated by the inverse-transpose basis.
    pub fn dual(&self) -> Lattice {
        Lattice::from_basis(self.inverse_basis.transpose())
            .expect("dual of a nonsingular basis is nonsingular")
    }

    /// Volume-to-noise ratio V^(2/n) / sigma^2.
    pub fn vnr(&self, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::NonPositiveSigma(sigma));
        }
        Ok(self.volume.powf(2.0 / self.dim as f64) / (sigma * sigma))
    }

    /// Real coordinates of x in the lattice basis.
    pub fn coordinates(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.inverse_basis * x)
    }

    /// Lattice point with the given integer coordinates.
    pub fn point(&self, coords: &[i64]) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim, coords.iter().map(|&v| v as f64));
        &self.basis * z
    }

    /// Membership test: coordinates within `MEMBERSHIP_TOL` of integers.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self.coordinates(x) {
            Ok(t) => t.iter().all(|&v| (v - v.round()).abs() <= MEMBERSHIP_TOL),
            Err(_) => false,
        }
    }

    /// Integer coordinates of a lattice point, or `NotLatticePoint`.
    pub fn integer_coordinates(&self, x: &DVector<f64>) -> Result<Vec<i64>> {
        let t = self.coordinates(x)?;
        let mut out = Vec::with_capacity(self.dim);
        for &v in t.iter() {
            let r = v.round();
            if (v - r).abs() > MEMBERSHIP_TOL {
                return Err(Error::NotLatticePoint);
            }
            out.push(r as i64);
        }
        Ok(out)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Nearest lattice point under the Euclidean norm, by exact sphere
    /// enumeration seeded at the rounded coordinates. Ties go to the
    /// lexicographically smallest integer coordinate vector.
    pub fn nearest_point(&self, x: &DVector<f64>) -> Result<Reduction> {
        self.nearest_point_with_limit(x, DEFAULT_CVP_LIMIT)
    }

    pub fn nearest_point_with_limit(&self, x: &DVector<f64>, limit: usize) -> Result<Reduction> {
        self.check_dim(x)?;
        if self.dim > limit {
            return Err(Error::DimensionTooLarge { dim: self.dim, limit });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point entries must be finite".into()));
        }
        let t = self.coordinates(x)?;
        let (z, _) = self.ctx.closest(t.as_slice());
        let lattice_point = self.point(&z);
        let residue = x - &lattice_point;
        Ok(Reduction { residue, lattice_point, coords: z })
    }

    /// Reduces x modulo the chosen fundamental region.
    pub fn reduce(&self, kind: RegionKind, x: &DVector<f64>) -> Result<Reduction> {
        match kind {
            RegionKind::Parallelepiped => self.reduce_parallelepiped(x),
            RegionKind::Voronoi => self.nearest_point(x),
        }
    }

    /// Reduction into the fundamental parallelepiped: fractional coordinates
    /// in [0, 1). Coordinates within `MEMBERSHIP_TOL` of an integer snap to
    /// it, so lattice points reduce to zero and boundary points are decided
    /// consistently.
    pub fn reduce_parallelepiped(&self, x: &DVector<f64>) -> Result<Reduction> {
        let t = self.coordinates(x)?;
        let mut coords = Vec::with_capacity(self.dim);
        let mut frac = DVector::zeros(self.dim);
        for (i, &v) in t.iter().enumerate() {
            let snapped = if (v - v.round()).abs() <= MEMBERSHIP_TOL { v.round() } else { v };
            let fl = snapped.floor();
            coords.push(fl as i64);
            frac[i] = snapped - fl;
        }
        let residue = &self.basis * frac;
        let lattice_point = x - &residue;
        Ok(Reduction { residue, lattice_point, coords })
    }

    /// Visits all lattice points within `radius` of `center` as
    /// `(integer coords, squared distance)`.
    pub fn for_each_in_ball(
        &self,
        center: &DVector<f64>,
        radius: f64,
        max_points: u64,
        visit: &mut dyn FnMut(&[i64], f64),
    ) -> Result<u64> {
        self.check_dim(center)?;
        let t = self.coordinates(center)?;
        self.ctx.for_each_in_ball(t.as_slice(), radius * radius, max_points, visit)
    }

}

/// Checks that `coarse` is a sublattice of `fine` and returns the integer
/// coordinates of the coarse basis in the fine basis.
pub fn nesting_coordinates(fine: &Lattice, coarse: &Lattice) -> Result<Vec<Vec<i64>>> {
    if fine.dimension() != coarse.dimension() {
        return Err(Error::DimensionMismatch {
            expected: fine.dimension(),
            got: coarse.dimension(),
        });
    }
    let m = fine.inverse_basis() * coarse.basis();
    let n = fine.dimension();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut col = Vec::with_capacity(n);
        for i in 0..n {
            let v = m[(i, j)];
            if (v - v.round()).abs() > MEMBERSHIP_TOL {
                return Err(Error::NotNested);
            }
            col.push(v.round() as i64);
        }
        cols.push(col);
    }
    Ok(cols)
}

/// Quotient-group machinery for a nested pair `coarse ⊆ fine`.
///
/// Cosets are indexed 0..index in the mixed-radix order of the Hermite-form
/// box; the indexing is deterministic and shared by every caller.
#[derive(Debug, Clone)]
pub struct CosetTable {
    fine: Lattice,
    coarse: Lattice,
    hnf_cols: Vec<Vec<i64>>,
    diag: Vec<i64>,
    strides: Vec<u64>,
    index: u64,
}

impl CosetTable {
    pub fn new(fine: &Lattice, coarse: &Lattice) -> Result<Self> {
        Self::with_limit(fine, coarse, DEFAULT_INDEX_LIMIT)
    }

    pub fn with_limit(fine: &Lattice, coarse: &Lattice, limit: u64) -> Result<Self> {
        let cols = nesting_coordinates(fine, coarse)?;
        let n = fine.dimension();
        let hnf_cols = hnf::column_hnf(cols, n).map_err(|_| Error::NotNested)?;
        let diag: Vec<i64> = (0..n).map(|i| hnf_cols[i][i]).collect();
        let mut index: u128 = 1;
        for &d in &diag {
            index *= d as u128;
        }
        let vol_ratio = coarse.volume() / fine.volume();
        debug_assert!(
            (vol_ratio - index as f64).abs() <= 1e-6 * vol_ratio,
            "HNF determinant disagrees with volume ratio"
        );
        if index > limit as u128 {
            return Err(Error::IndexTooLarge { index, limit });
        }
        let mut strides = vec![0u64; n];
        let mut acc = 1u64;
        for i in 0..n {
            strides[i] = acc;
            acc *= diag[i] as u64;
        }
        Ok(CosetTable {
            fine: fine.clone(),
            coarse: coarse.clone(),
            hnf_cols,
            diag,
            strides,
            index: index as u64,
        })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn fine(&self) -> &Lattice {
        &self.fine
    }

    pub fn coarse(&self) -> &Lattice {
        &self.coarse
    }

    /// Canonical box coordinates of the coset containing fine-coordinates z.
    fn reduce_coords(&self, z: &[i64]) -> Vec<i64> {
        let n = self.diag.len();
        let mut w = z.to_vec();
        for i in 0..n {
            let q = hnf::floor_div(w[i], self.diag[i]);
            if q != 0 {
                for row in i..n {
                    w[row] -= q * self.hnf_cols[i][row];
                }
            }
        }
        w
    }

    /// Coset index of a vector of fine-basis integer coordinates.
    pub fn index_of_coords(&self, z: &[i64]) -> usize {
        let w = self.reduce_coords(z);
        w.iter().zip(&self.strides).map(|(&v, &s)| v as u64 * s).sum::<u64>() as usize
    }

    /// Coset index of a fine-lattice point given in ambient coordinates.
    pub fn index_of_point(&self, x: &DVector<f64>) -> Result<usize> {
        let z = self.fine.integer_coordinates(x)?;
        Ok(self.index_of_coords(&z))
    }

    fn box_coords(&self, idx: u64) -> Vec<i64> {
        let n = self.diag.len();
        let mut rem = idx;
        let mut z = vec![0i64; n];
        for i in 0..n {
            z[i] = (rem % self.diag[i] as u64) as i64;
            rem /= self.diag[i] as u64;
        }
        z
    }

    /// Representative of coset `idx`, reduced into the coarse parallelepiped.
    pub fn representative(&self, idx: u64) -> DVector<f64> {
        let z = self.box_coords(idx);
        let p = self.fine.point(&z);
        self.coarse
            .reduce_parallelepiped(&p)
            .expect("dimension checked at construction")
            .residue
    }

    pub fn representatives(&self) -> Vec<DVector<f64>> {
        (0..self.index).map(|i| self.representative(i)).collect()
    }
}

/// Complete set of coset representatives of `fine / coarse`, each reduced
/// into the coarse parallelepiped.
pub fn coset_representatives(fine: &Lattice, coarse: &Lattice) -> Result<Vec<DVector<f64>>> {
    Ok(CosetTable::new(fine, coarse)?.representatives())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn build_unit_lattice() {
        let l = Lattice::from_basis(dmatrix![1.0, 0.0; 0.0, 1.0]).unwrap();
        assert!((l.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_sheared_lattice_volume() {
        let l = Lattice::from_basis(dmatrix![2.0, 0.0; 1.0, 3.0]).unwrap();
        assert!((l.volume() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let r = Lattice::from_basis(dmatrix![1.0, 2.0; 2.0, 4.0]);
        assert!(matches!(r, Err(Error::SingularBasis { .. })));
    }

    #[test]
    fn dual_of_integers_is_integers() {
        let l = Lattice::integers(3);
        let d = l.dual();
        assert!((d.volume() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            let col = DVector::from_column_slice(d.basis().column(j).as_slice());
            assert!(l.contains(&col));
        }
    }

    #[test]
    fn dual_of_2z_is_half_z() {
        let l = Lattice::scaled_integers(2.0, 1).unwrap();
        let d = l.dual();
        assert!((d.volume() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dual_is_involutive() {
        let l = Lattice::from_basis(dmatrix![2.0, 0.0; 1.0, 3.0]).unwrap();
        let dd = l.dual().dual();
        // mutual membership of generators
        for j in 0..2 {
            let a = DVector::from_column_slice(l.basis().column(j).as_slice());
            let b = DVector::from_column_slice(dd.basis().column(j).as_slice());
            assert!(dd.contains(&a));
            assert!(l.contains(&b));
        }
    }

    #[test]
    fn parallelepiped_reduction_examples() {
        let l = Lattice::integers(2);
        let r = l.reduce_parallelepiped(&dvector![1.25, -0.5]).unwrap();
        assert!((r.residue - dvector![0.25, 0.5]).norm() < 1e-12);
        assert_eq!(r.coords, vec![1, -1]);

        let on_lattice = l.reduce_parallelepiped(&dvector![3.0, -7.0]).unwrap();
        assert!(on_lattice.residue.norm() < 1e-12);
    }

    #[test]
    fn voronoi_reduction_example() {
        let l = Lattice::integers(2);
        let r = l.reduce(RegionKind::Voronoi, &dvector![0.6, 0.0]).unwrap();
        assert!((r.residue - dvector![-0.4, 0.0]).norm() < 1e-12);
        assert_eq!(r.coords, vec![1, 0]);
    }

    #[test]
    fn nearest_point_examples() {
        let l = Lattice::integers(2);
        let r = l.nearest_point(&dvector![0.6, -1.2]).unwrap();
        assert_eq!(r.coords, vec![1, -1]);

        let z = Lattice::integers(1);
        let r = z.nearest_point(&dvector![0.5]).unwrap();
        assert_eq!(r.coords, vec![0], "tie breaks toward the smaller vector");
    }

    #[test]
    fn nearest_point_dimension_cap() {
        let l = Lattice::integers(2);
        let err = l.nearest_point_with_limit(&dvector![0.1, 0.2], 1).unwrap_err();
        assert!(matches!(err, Error::DimensionTooLarge { .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let l = Lattice::integers(2);
        let err = l.reduce_parallelepiped(&dvector![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn cosets_of_2z_in_z() {
        let fine = Lattice::integers(1);
        let coarse = Lattice::scaled_integers(2.0, 1).unwrap();
        let reps = coset_representatives(&fine, &coarse).unwrap();
        let mut vals: Vec<f64> = reps.iter().map(|r| r[0]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vals.len(), 2);
        assert!((vals[0] - 0.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coset_count_matches_volume_ratio() {
        let fine = Lattice::integers(2);
        let coarse = Lattice::scaled_integers(3.0, 2).unwrap();
        let reps = coset_representatives(&fine, &coarse).unwrap();
        assert_eq!(reps.len(), 9);
    }

    #[test]
    fn not_nested_detected() {
        let fine = Lattice::scaled_integers(2.0, 1).unwrap();
        let coarse = Lattice::integers(1);
        assert!(matches!(CosetTable::new(&fine, &coarse), Err(Error::NotNested)));
    }

    #[test]
    fn index_limit_enforced() {
        let fine = Lattice::integers(2);
        let coarse = Lattice::scaled_integers(100.0, 2).unwrap();
        let err = CosetTable::with_limit(&fine, &coarse, 100).unwrap_err();
        assert!(matches!(err, Error::IndexTooLarge { .. }));
    }

    #[test]
    fn vnr_examples() {
        let z = Lattice::integers(1);
        assert!((z.vnr(1.0).unwrap() - 1.0).abs() < 1e-12);
        let z2 = Lattice::integers(2);
        let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((z2.vnr(s).unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-9);
        // scaling a lattice by c multiplies the vnr by c^2
        let z2c = Lattice::scaled_integers(3.0, 2).unwrap();
        let base = z2.vnr(0.7).unwrap();
        assert!((z2c.vnr(0.7).unwrap() - 9.0 * base).abs() < 1e-9 * base);
        assert!(matches!(z2.vnr(0.0), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn fundamental_region_binds_kind_and_lattice() {
        let l = Lattice::integers(2);
        let para = FundamentalRegion::new(RegionKind::Parallelepiped, &l);
        let voro = FundamentalRegion::new(RegionKind::Voronoi, &l);
        assert_eq!(para.kind(), RegionKind::Parallelepiped);
        assert_eq!(para.lattice().dimension(), 2);
        let x = dvector![0.6, -0.2];
        let a = para.reduce(&x).unwrap();
        assert!((a.residue.clone() - dvector![0.6, 0.8]).norm() < 1e-12);
        let b = voro.reduce(&x).unwrap();
        assert!((b.residue.clone() - dvector![-0.4, -0.2]).norm() < 1e-12);
    }

    #[test]
    fn voronoi_matches_nearest_point() {
        let l = Lattice::from_basis(dmatrix![1.0, 0.5; 0.0, 0.866]).unwrap();
        let x = dvector![0.9, 0.4];
        let q = l.nearest_point(&x).unwrap();
        let r = l.reduce(RegionKind::Voronoi, &x).unwrap();
        assert_eq!(q.coords, r.coords);
        assert!((r.residue.clone() + r.lattice_point.clone() - x).norm() < 1e-12);
    }
}
