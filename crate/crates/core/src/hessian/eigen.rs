use crate::error::{Error, Result};

/// Symmetric 3x3 matrix given by its upper triangle.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymMat3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymMat3 {
    pub fn from_upper([xx, xy, xz, yy, yz, zz]: [f64; 6]) -> Self {
        SymMat3 { xx, xy, xz, yy, yz, zz }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymMat3 {
            xx: a,
            yy: b,
            zz: c,
            ..Default::default()
        }
    }

    pub fn entries(&self) -> [f64; 6] {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn frobenius(&self) -> f64 {
        (self.xx * self.xx
            + self.yy * self.yy
            + self.zz * self.zz
            + 2.0 * (self.xy * self.xy + self.xz * self.xz + self.yz * self.yz))
            .sqrt()
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz) - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    /// Sum of the principal 2x2 minors.
    fn minor_sum(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy + self.xx * self.zz - self.xz * self.xz + self.yy * self.zz
            - self.yz * self.yz
    }

    fn scaled(&self, s: f64) -> SymMat3 {
        SymMat3::from_upper(self.entries().map(|v| v * s))
    }
}

/// Eigenvalues ordered by magnitude, `|l1| <= |l2| <= |l3|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenTriple {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl EigenTriple {
    /// Orders three values by absolute value, breaking ties by signed value.
    pub fn from_unordered(mut v: [f64; 3]) -> Self {
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        EigenTriple {
            l1: v[0],
            l2: v[1],
            l3: v[2],
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }
}

/// Closed-form eigenvalues of a symmetric 3x3 matrix.
///
/// Uses the trigonometric solution of the characteristic cubic on the
/// shifted, scaled matrix `(A - tr(A)/3) / p`. When two roots nearly coincide
/// the isolated root is kept and the pair is recovered from the deflated
/// quadratic, which is better conditioned than the `acos` branch there.
pub fn eigenvalues_sym3(h: &SymMat3) -> Result<EigenTriple> {
    if h.entries().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite matrix entry in {h:?}")));
    }
    let scale = h.entries().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(EigenTriple {
            l1: 0.0,
            l2: 0.0,
            l3: 0.0,
        });
    }
    let a = h.scaled(1.0 / scale);
    let roots = unit_scale_roots(&a);
    Ok(EigenTriple::from_unordered(roots.map(|r| r * scale)))
}

fn unit_scale_roots(a: &SymMat3) -> [f64; 3] {
    let q = a.trace() / 3.0;
    let off = a.xy * a.xy + a.xz * a.xz + a.yz * a.yz;
    let p2 = (a.xx - q).powi(2) + (a.yy - q).powi(2) + (a.zz - q).powi(2) + 2.0 * off;
    if p2 <= 1e-30 {
        return [q; 3];
    }
    let p = (p2 / 6.0).sqrt();
    let b = SymMat3 {
        xx: (a.xx - q) / p,
        yy: (a.yy - q) / p,
        zz: (a.zz - q) / p,
        xy: a.xy / p,
        xz: a.xz / p,
        yz: a.yz / p,
    };
    let r = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;

    // Near r = +-1 two roots merge and acos loses half the digits.
    let gap_top = hi - mid;
    let gap_bottom = mid - lo;
    let tight = 1e-4 * p;
    if gap_top < tight || gap_bottom < tight {
        let isolated = if gap_top < gap_bottom { lo } else { hi };
        let isolated = newton_polish(a, isolated);
        let (r1, r2) = deflate(a, isolated);
        return [isolated, r1, r2];
    }
    [lo, mid, hi].map(|l| newton_polish(a, l))
}

/// Characteristic polynomial `det(A - l I) = -l^3 + t l^2 - m l + d` and its derivative.
fn char_poly(a: &SymMat3, l: f64) -> (f64, f64) {
    let t = a.trace();
    let m = a.minor_sum();
    let d = a.det();
    let f = ((-l + t) * l - m) * l + d;
    let df = (-3.0 * l + 2.0 * t) * l - m;
    (f, df)
}

fn newton_polish(a: &SymMat3, l: f64) -> f64 {
    let (f, df) = char_poly(a, l);
    if df.abs() < 1e-8 {
        return l;
    }
    let step = f / df;
    let next = l - step;
    // Accept only steps that reduce the residual.
    if char_poly(a, next).0.abs() < f.abs() {
        next
    } else {
        l
    }
}

/// Remaining two roots given one root `l`: they sum to `tr - l` and their
/// product is `m - l (tr - l)`.
fn deflate(a: &SymMat3, l: f64) -> (f64, f64) {
    let s = a.trace() - l;
    let prod = a.minor_sum() - l * s;
    let disc = (s * s - 4.0 * prod).max(0.0).sqrt();
    let r1 = 0.5 * (s + disc);
    let r2 = 0.5 * (s - disc);
    (r1, r2)
}
