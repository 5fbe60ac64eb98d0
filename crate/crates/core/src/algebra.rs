//! Pointwise curvature algebra in dimension four.
//!
//! Tensors are stored by their components in an orthonormal frame, so raising
//! and lowering indices is the identity. The sign convention is the one where
//! the unit round sphere has `R_{ijij} = 1` for `i != j`, with Ricci obtained by
//! contracting the second and fourth slots.
//!
//! The contraction products used throughout are
//!
//! * `(A∘B)_{ij} = A_{ipjq} B_{pq}` for a curvature-type `A`,
//! * `(h∘k)_{ij} = h_{ip} k_{pj}` for two symmetric 2-tensors.

use rand::Rng;

use crate::error::{Error, Result};

pub const DIM: usize = 4;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric 2-tensor in an orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2(pub [[f64; DIM]; DIM]);

impl Sym2 {
    pub fn zero() -> Self {
        Sym2([[0.0; DIM]; DIM])
    }

    pub fn identity() -> Self {
        Self::diagonal(1.0)
    }

    pub fn diagonal(value: f64) -> Self {
        let mut m = [[0.0; DIM]; DIM];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = value;
        }
        Sym2(m)
    }

    /// Builds a tensor from an arbitrary matrix by symmetrising it.
    pub fn symmetrize(m: [[f64; DIM]; DIM]) -> Self {
        let mut out = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                out[i][j] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        Sym2(out)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..DIM).map(|i| self.0[i][i]).sum()
    }

    pub fn dot(&self, other: &Sym2) -> f64 {
        let mut acc = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                acc += self.0[i][j] * other.0[i][j];
            }
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&self, c: f64) -> Sym2 {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Sym2) -> Sym2 {
        self.zip(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Sym2) -> Sym2 {
        self.zip(other, |x, y| x - y)
    }

    /// Traceless part `h - (tr h / 4) g`.
    pub fn traceless(&self) -> Sym2 {
        self.sub(&Sym2::diagonal(self.trace() / DIM as f64))
    }

    /// Matrix product `(h∘k)_{ij} = h_{ip} k_{pj}`.
    pub fn compose(&self, other: &Sym2) -> Sym2 {
        let mut out = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                out[i][j] = (0..DIM).map(|p| self.0[i][p] * other.0[p][j]).sum();
            }
        }
        Sym2(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.0[i][j] - self.0[j][i]).abs());
            }
        }
        worst
    }

    fn map(&self, op: impl Fn(f64) -> f64) -> Sym2 {
        let mut out = self.0;
        out.iter_mut().flatten().for_each(|x| *x = op(*x));
        Sym2(out)
    }

    fn zip(&self, other: &Sym2, op: impl Fn(f64, f64) -> f64) -> Sym2 {
        let mut out = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                out[i][j] = op(self.0[i][j], other.0[i][j]);
            }
        }
        Sym2(out)
    }
}

#[inline]
fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * DIM + j) * DIM + k) * DIM + l
}

/// Rank-4 algebraic curvature tensor in an orthonormal frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgCurvature {
    c: Box<[f64; 256]>,
}

impl Default for AlgCurvature {
    fn default() -> Self {
        Self::zero()
    }
}

impl AlgCurvature {
    pub fn zero() -> Self {
        AlgCurvature { c: Box::new([0.0; 256]) }
    }

    /// Builds a tensor from raw components without validation.
    pub fn from_fn(mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    for l in 0..DIM {
                        out.c[idx(i, j, k, l)] = f(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Curvature of the unit round sphere, `δ_ik δ_jl − δ_il δ_jk`.
    pub fn round() -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Self::from_fn(|i, j, k, l| d(i, k) * d(j, l) - d(i, l) * d(j, k))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.c[idx(i, j, k, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        self.c[idx(i, j, k, l)] = value;
    }

    pub fn components(&self) -> &[f64; 256] {
        &self.c
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add(&self, other: &AlgCurvature) -> Self {
        let mut out = self.clone();
        out.c.iter_mut().zip(other.c.iter()).for_each(|(x, y)| *x += y);
        out
    }

    pub fn sub(&self, other: &AlgCurvature) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn dot(&self, other: &AlgCurvature) -> f64 {
        self.c.iter().zip(other.c.iter()).map(|(x, y)| x * y).sum()
    }

    /// Full tensor norm `R_{ijkl} R_{ijkl}`.
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest violation of the antisymmetries, pair symmetry and first Bianchi identity.
    pub fn symmetry_defects(&self) -> [(&'static str, f64); 4] {
        let mut anti_first: f64 = 0.0;
        let mut anti_last: f64 = 0.0;
        let mut pair: f64 = 0.0;
        let mut bianchi: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    for l in 0..DIM {
                        let r = self.get(i, j, k, l);
                        anti_first = anti_first.max((r + self.get(j, i, k, l)).abs());
                        anti_last = anti_last.max((r + self.get(i, j, l, k)).abs());
                        pair = pair.max((r - self.get(k, l, i, j)).abs());
                        let b = r + self.get(i, k, l, j) + self.get(i, l, j, k);
                        bianchi = bianchi.max(b.abs());
                    }
                }
            }
        }
        [
            ("antisymmetry in the first pair", anti_first),
            ("antisymmetry in the second pair", anti_last),
            ("pair symmetry", pair),
            ("first Bianchi identity", bianchi),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let tol = SYMMETRY_TOL * self.max_abs().max(1.0);
        for (what, residual) in self.symmetry_defects() {
            if !(residual <= tol) {
                return Err(Error::CurvatureSymmetry { what, residual });
            }
        }
        Ok(())
    }

    /// Ricci contraction `r_{ik} = R_{ijkj}`.
    pub fn ricci(&self) -> Sym2 {
        let mut out = [[0.0; DIM]; DIM];
        for (i, row) in out.iter_mut().enumerate() {
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = (0..DIM).map(|j| self.get(i, j, k, j)).sum();
            }
        }
        Sym2(out)
    }

    pub fn scalar(&self) -> f64 {
        self.ricci().trace()
    }

    /// `(R∘h)_{ij} = R_{ipjq} h_{pq}`.
    pub fn contract_with(&self, h: &Sym2) -> Sym2 {
        let mut out = [[0.0; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                let mut acc = 0.0;
                for p in 0..DIM {
                    for q in 0..DIM {
                        acc += self.get(i, p, j, q) * h.0[p][q];
                    }
                }
                out[i][j] = acc;
            }
        }
        Sym2(out)
    }

    /// Largest single trace `|R_{ipjp}|`; zero for a Weyl-type tensor.
    pub fn max_single_trace(&self) -> f64 {
        self.ricci().max_abs()
    }
}

/// Kulkarni-Nomizu product
/// `(h⊙k)_{ijkl} = h_{ik}k_{jl} + h_{jl}k_{ik} − h_{il}k_{jk} − h_{jk}k_{il}`.
pub fn kulkarni_nomizu(h: &Sym2, k: &Sym2) -> AlgCurvature {
    AlgCurvature::from_fn(|i, j, a, b| {
        h.0[i][a] * k.0[j][b] + h.0[j][b] * k.0[i][a] - h.0[i][b] * k.0[j][a] - h.0[j][a] * k.0[i][b]
    })
}

fn g_wedge_g() -> AlgCurvature {
    let g = Sym2::identity();
    kulkarni_nomizu(&g, &g)
}

/// Splitting of a curvature tensor into scalar, traceless Ricci and Weyl parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureDecomposition {
    pub s: f64,
    pub z: Sym2,
    pub weyl: AlgCurvature,
}

impl CurvatureDecomposition {
    pub fn ricci(&self) -> Sym2 {
        self.z.add(&Sym2::diagonal(self.s / 4.0))
    }
}

/// Splits `R = W + ½ z⊙g + (s/24) g⊙g`.
pub fn decompose(r: &AlgCurvature) -> Result<CurvatureDecomposition> {
    r.validate()?;
    Ok(decompose_unchecked(r))
}

fn decompose_unchecked(r: &AlgCurvature) -> CurvatureDecomposition {
    let ric = r.ricci();
    let s = ric.trace();
    let z = ric.traceless();
    let g = Sym2::identity();
    let weyl = r
        .sub(&kulkarni_nomizu(&z, &g).scale(0.5))
        .sub(&g_wedge_g().scale(s / 24.0));
    CurvatureDecomposition { s, z, weyl }
}

/// Inverse of [`decompose`].
pub fn reconstruct(d: &CurvatureDecomposition) -> Result<AlgCurvature> {
    let tr = d.z.trace();
    if tr.abs() > 1e-10 * d.z.max_abs().max(1.0) {
        return Err(Error::NotTraceless(tr));
    }
    let g = Sym2::identity();
    Ok(d
        .weyl
        .add(&kulkarni_nomizu(&d.z, &g).scale(0.5))
        .add(&g_wedge_g().scale(d.s / 24.0)))
}

/// `Ř_{ij} = R_{ipqr} R_{jpqr}`.
pub fn check_contraction(r: &AlgCurvature) -> Sym2 {
    let mut out = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in i..DIM {
            let mut acc = 0.0;
            for p in 0..DIM {
                for q in 0..DIM {
                    for t in 0..DIM {
                        acc += r.get(i, p, q, t) * r.get(j, p, q, t);
                    }
                }
            }
            out[i][j] = acc;
            out[j][i] = acc;
        }
    }
    Sym2(out)
}

/// Concircular tensor `Rm − (s/24) g⊙g`.
pub fn concircular(r: &AlgCurvature) -> AlgCurvature {
    r.sub(&g_wedge_g().scale(r.scalar() / 24.0))
}

/// Max-norm residuals of the pointwise four-dimensional identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicResiduals {
    /// `Ř − ¼|Rm|² g = (s/3) z + 2 W∘z`
    pub check_identity: f64,
    /// `2 r∘r = 2 z∘z + s z + ⅛ s² g`
    pub ricci_square: f64,
    /// `−2 R∘r = −2 W∘z − |z|² g + 2 z∘z − (s/3) z − ⅛ s² g`
    pub curvature_ricci: f64,
    /// `|Rm|² = |W|² + 2|z|² + s²/6`
    pub norm_split: f64,
    /// `|Rm − (s/24) g⊙g|² = |W|² + 2|z|²`
    pub concircular_norm: f64,
}

impl AlgebraicResiduals {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("check_identity", self.check_identity),
            ("ricci_square", self.ricci_square),
            ("curvature_ricci", self.curvature_ricci),
            ("norm_split", self.norm_split),
            ("concircular_norm", self.concircular_norm),
        ]
    }

    pub fn max(&self) -> f64 {
        self.named().iter().fold(0.0, |m, (_, v)| m.max(*v))
    }
}

pub fn algebraic_residuals(r: &AlgCurvature) -> AlgebraicResiduals {
    let d = decompose_unchecked(r);
    let g = Sym2::identity();
    let (s, z, w) = (d.s, d.z, &d.weyl);
    let ric = d.ricci();
    let z_sq = z.norm_sq();
    let w_z = w.contract_with(&z);
    let z_z = z.compose(&z);
    let rm_sq = r.norm_sq();

    let lhs_a = check_contraction(r).sub(&g.scale(0.25 * rm_sq));
    let rhs_a = z.scale(s / 3.0).add(&w_z.scale(2.0));

    let lhs_b = ric.compose(&ric).scale(2.0);
    let rhs_b = z_z.scale(2.0).add(&z.scale(s)).add(&g.scale(s * s / 8.0));

    let lhs_c = r.contract_with(&ric).scale(-2.0);
    let rhs_c = w_z
        .scale(-2.0)
        .sub(&g.scale(z_sq))
        .add(&z_z.scale(2.0))
        .sub(&z.scale(s / 3.0))
        .sub(&g.scale(s * s / 8.0));

    let w_sq = w.norm_sq();
    AlgebraicResiduals {
        check_identity: lhs_a.sub(&rhs_a).max_abs(),
        ricci_square: lhs_b.sub(&rhs_b).max_abs(),
        curvature_ricci: lhs_c.sub(&rhs_c).max_abs(),
        norm_split: (rm_sq - (w_sq + 2.0 * z_sq + s * s / 6.0)).abs(),
        concircular_norm: (concircular(r).norm_sq() - (w_sq + 2.0 * z_sq)).abs(),
    }
}

/// Zeroth-order part of the gradient: `(s/3) z + 4 z∘z − |z|² g − 4 W∘z`.
pub fn grad_f_algebraic(d: &CurvatureDecomposition) -> Sym2 {
    let z = &d.z;
    z.scale(d.s / 3.0)
        .add(&z.compose(z).scale(4.0))
        .sub(&Sym2::diagonal(z.norm_sq()))
        .sub(&d.weyl.contract_with(z).scale(4.0))
}

/// Random symmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_sym2<R: Rng + ?Sized>(rng: &mut R) -> Sym2 {
    let mut m = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in i..DIM {
            let x = rng.gen_range(-1.0..1.0);
            m[i][j] = x;
            m[j][i] = x;
        }
    }
    Sym2(m)
}

pub fn random_traceless<R: Rng + ?Sized>(rng: &mut R) -> Sym2 {
    random_sym2(rng).traceless()
}

/// Random totally trace-free tensor obtained by projecting a random
/// algebraic curvature tensor (a sum of Kulkarni-Nomizu products).
pub fn random_weyl<R: Rng + ?Sized>(rng: &mut R) -> AlgCurvature {
    let mut raw = AlgCurvature::zero();
    for _ in 0..3 {
        let h = random_sym2(rng);
        let k = random_sym2(rng);
        raw = raw.add(&kulkarni_nomizu(&h, &k));
    }
    decompose_unchecked(&raw).weyl
}

/// Random valid decomposition with all three irreducible parts populated.
pub fn random_decomposition<R: Rng + ?Sized>(rng: &mut R) -> CurvatureDecomposition {
    CurvatureDecomposition {
        s: rng.gen_range(-12.0..12.0),
        z: random_traceless(rng),
        weyl: random_weyl(rng),
    }
}

pub fn random_curvature<R: Rng + ?Sized>(rng: &mut R) -> AlgCurvature {
    let d = random_decomposition(rng);
    reconstruct(&d).expect("generated z is traceless")
}
