//! PolSAR data model and deterministic polarimetric transforms.
//!
//! A single-look pixel is a 2x2 complex scattering matrix; under reciprocity
//! it vectorises to the lexicographic target vector `[S_hh, sqrt(2) S_hv,
//! S_vv]` whose averaged outer product is the 3x3 Hermitian covariance. The
//! covariance is stored as nine reals per pixel in the fixed channel order
//!
//! `[R11, R12, I12, R13, I13, R22, R23, I23, R33]`
//!
//! where `Rij`/`Iij` are the real/imaginary parts of entry `(i, j)` of the
//! upper triangle. All raster math here is `f64`; the network converts at its
//! own boundary. Everything in this module is a pure function on immutable
//! inputs.

use num_complex::Complex64;
use std::f64::consts::SQRT_2;

use nalgebra::Matrix3;

/// 3x3 complex matrix used for covariance/coherency algebra.
pub type CMat3 = Matrix3<Complex64>;

#[derive(thiserror::Error, Debug)]
pub enum PolarimetryError {
    #[error("matrix is not Hermitian (max deviation {max_dev:.3e}, tolerance {tol:.3e})")]
    NotHermitian { max_dev: f64, tol: f64 },
    #[error("raster dims {height}x{width} not divisible by factor {factor}")]
    NonDivisibleDims {
        height: usize,
        width: usize,
        factor: usize,
    },
    #[error("signature step {0} deg must evenly divide the 180 and 90 deg ranges")]
    BadSignatureStep(f64),
    #[error("raster data length {len} does not match {height}x{width}x{channels}")]
    BadDataLength {
        height: usize,
        width: usize,
        channels: usize,
        len: usize,
    },
    #[error("raster dims differ: {0}x{1} vs {2}x{3}")]
    DimMismatch(usize, usize, usize, usize),
}

/// Channel indices of the packed covariance vector.
pub const CH_R11: usize = 0;
pub const CH_R12: usize = 1;
pub const CH_I12: usize = 2;
pub const CH_R13: usize = 3;
pub const CH_I13: usize = 4;
pub const CH_R22: usize = 5;
pub const CH_R23: usize = 6;
pub const CH_I23: usize = 7;
pub const CH_R33: usize = 8;

/// Which polarimetric channel a single-polarization intensity image carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PolMode {
    HH,
    HV,
    VV,
}

impl std::fmt::Display for PolMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolMode::HH => "HH",
            PolMode::HV => "HV",
            PolMode::VV => "VV",
        })
    }
}

impl std::str::FromStr for PolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HH" => Ok(PolMode::HH),
            "HV" => Ok(PolMode::HV),
            "VV" => Ok(PolMode::VV),
            other => Err(format!("unknown polarimetric mode {other:?}")),
        }
    }
}

/// Monostatic scattering matrix; reciprocity is structural (no `s_vh` slot).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatteringMatrix {
    pub s_hh: Complex64,
    pub s_hv: Complex64,
    pub s_vv: Complex64,
}

impl ScatteringMatrix {
    pub fn new(s_hh: Complex64, s_hv: Complex64, s_vv: Complex64) -> Self {
        Self { s_hh, s_hv, s_vv }
    }

    /// Real-amplitude shorthand used by canonical targets.
    pub fn real(hh: f64, hv: f64, vv: f64) -> Self {
        Self::new(
            Complex64::new(hh, 0.0),
            Complex64::new(hv, 0.0),
            Complex64::new(vv, 0.0),
        )
    }
}

/// Packed covariance values of one pixel (linear power units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C3Vector(pub [f64; 9]);

impl C3Vector {
    pub fn zero() -> Self {
        Self([0.0; 9])
    }

    pub fn r11(&self) -> f64 {
        self.0[CH_R11]
    }
    pub fn r12(&self) -> f64 {
        self.0[CH_R12]
    }
    pub fn i12(&self) -> f64 {
        self.0[CH_I12]
    }
    pub fn r13(&self) -> f64 {
        self.0[CH_R13]
    }
    pub fn i13(&self) -> f64 {
        self.0[CH_I13]
    }
    pub fn r22(&self) -> f64 {
        self.0[CH_R22]
    }
    pub fn r23(&self) -> f64 {
        self.0[CH_R23]
    }
    pub fn i23(&self) -> f64 {
        self.0[CH_I23]
    }
    pub fn r33(&self) -> f64 {
        self.0[CH_R33]
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.0;
        for v in &mut out {
            *v *= k;
        }
        Self(out)
    }
}

/// Packed coherency values of one pixel, same layout as [`C3Vector`] but in
/// the Pauli basis: `[T11, T12r, T12i, T13r, T13i, T22, T23r, T23i, T33]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct T3Matrix(pub [f64; 9]);

impl T3Matrix {
    pub fn t11(&self) -> f64 {
        self.0[0]
    }
    pub fn t22(&self) -> f64 {
        self.0[5]
    }
    pub fn t33(&self) -> f64 {
        self.0[8]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[5] + self.0[8]
    }

    /// `Tr(T * T)` for a Hermitian matrix: the squared Frobenius norm.
    pub fn trace_of_square(&self) -> f64 {
        let d = &self.0;
        d[0] * d[0]
            + d[5] * d[5]
            + d[8] * d[8]
            + 2.0 * (d[1] * d[1] + d[2] * d[2] + d[3] * d[3] + d[4] * d[4] + d[6] * d[6] + d[7] * d[7])
    }
}

/// Vectorises a scattering matrix into packed covariance values; exact for a
/// single (non-averaged) scatterer.
pub fn s_to_c3(s: &ScatteringMatrix) -> C3Vector {
    let c12 = SQRT_2 * s.s_hh * s.s_hv.conj();
    let c13 = s.s_hh * s.s_vv.conj();
    let c23 = SQRT_2 * s.s_hv * s.s_vv.conj();
    C3Vector([
        s.s_hh.norm_sqr(),
        c12.re,
        c12.im,
        c13.re,
        c13.im,
        2.0 * s.s_hv.norm_sqr(),
        c23.re,
        c23.im,
        s.s_vv.norm_sqr(),
    ])
}

/// Expands packed values into the full Hermitian matrix (lower triangle by
/// conjugation).
pub fn c3_unpack(v: &C3Vector) -> CMat3 {
    let c12 = Complex64::new(v.r12(), v.i12());
    let c13 = Complex64::new(v.r13(), v.i13());
    let c23 = Complex64::new(v.r23(), v.i23());
    Matrix3::new(
        Complex64::new(v.r11(), 0.0),
        c12,
        c13,
        c12.conj(),
        Complex64::new(v.r22(), 0.0),
        c23,
        c13.conj(),
        c23.conj(),
        Complex64::new(v.r33(), 0.0),
    )
}

/// Packs a Hermitian matrix back into the nine stored reals.
///
/// `pack(unpack(v)) == v` bit-exactly. Inputs that deviate from conjugate
/// symmetry by more than `1e-9` relative to the largest entry are rejected.
pub fn c3_pack(m: &CMat3) -> Result<C3Vector, PolarimetryError> {
    let scale = m.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    let tol = 1e-9 * scale;
    let mut max_dev = 0.0f64;
    for i in 0..3 {
        for j in i..3 {
            let dev = (m[(j, i)] - m[(i, j)].conj()).norm();
            max_dev = max_dev.max(dev);
        }
    }
    if max_dev > tol {
        return Err(PolarimetryError::NotHermitian { max_dev, tol });
    }
    Ok(C3Vector([
        m[(0, 0)].re,
        m[(0, 1)].re,
        m[(0, 1)].im,
        m[(0, 2)].re,
        m[(0, 2)].im,
        m[(1, 1)].re,
        m[(1, 2)].re,
        m[(1, 2)].im,
        m[(2, 2)].re,
    ]))
}

/// Lexicographic-to-Pauli unitary similarity: preserves the trace.
pub fn c3_to_t3(v: &C3Vector) -> T3Matrix {
    let half = 0.5 * (v.r11() + v.r33());
    T3Matrix([
        half + v.r13(),
        0.5 * (v.r11() - v.r33()),
        -v.i13(),
        (v.r12() + v.r23()) / SQRT_2,
        (v.i12() - v.i23()) / SQRT_2,
        half - v.r13(),
        (v.r12() - v.r23()) / SQRT_2,
        (v.i12() + v.i23()) / SQRT_2,
        v.r22(),
    ])
}

/// Total backscattered power of one pixel.
pub fn span(v: &C3Vector) -> f64 {
    v.r11() + v.r22() + v.r33()
}

/// Pauli powers of one pixel: odd-bounce, even-bounce, cross-pol/volume.
pub fn pauli_powers_of(v: &C3Vector) -> [f64; 3] {
    let half = 0.5 * (v.r11() + v.r33());
    [half + v.r13(), half - v.r13(), v.r22()]
}

fn check_len(
    height: usize,
    width: usize,
    channels: usize,
    len: usize,
) -> Result<(), PolarimetryError> {
    if height * width * channels != len {
        return Err(PolarimetryError::BadDataLength {
            height,
            width,
            channels,
            len,
        });
    }
    Ok(())
}

/// H x W grid of packed covariance values, channel-planar storage.
#[derive(Clone, Debug, PartialEq)]
pub struct C3Raster {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl C3Raster {
    pub const CHANNELS: usize = 9;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, PolarimetryError> {
        check_len(height, width, Self::CHANNELS, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * Self::CHANNELS],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> C3Vector) -> Self {
        let mut r = Self::zeros(height, width);
        for y in 0..height {
            for x in 0..width {
                r.set(y, x, f(y, x));
            }
        }
        r
    }

    pub fn constant(height: usize, width: usize, v: C3Vector) -> Self {
        Self::from_fn(height, width, |_, _| v)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, y: usize, x: usize) -> C3Vector {
        let mut v = [0.0; 9];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = self.data[self.idx(c, y, x)];
        }
        C3Vector(v)
    }

    pub fn set(&mut self, y: usize, x: usize, v: C3Vector) {
        for (c, val) in v.0.iter().enumerate() {
            let i = self.idx(c, y, x);
            self.data[i] = *val;
        }
    }

    /// Crops a window; `y0 + h <= height`, `x0 + w <= width`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> C3Raster {
        assert!(y0 + h <= self.height && x0 + w <= self.width, "crop out of range");
        let mut out = C3Raster::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                out.set(y, x, self.get(y0 + y, x0 + x));
            }
        }
        out
    }

    /// Mean of packed values over the whole raster (an averaged pixel).
    pub fn mean_vector(&self) -> C3Vector {
        let plane = (self.height * self.width) as f64;
        let mut acc = [0.0; 9];
        for (c, slot) in acc.iter_mut().enumerate() {
            *slot = self.channel(c).iter().sum::<f64>() / plane;
        }
        C3Vector(acc)
    }
}

/// Single-channel intensity raster (linear power units).
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityRaster {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl IntensityRaster {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, PolarimetryError> {
        check_len(height, width, 1, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> IntensityRaster {
        assert!(y0 + h <= self.height && x0 + w <= self.width, "crop out of range");
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            let base = (y0 + y) * self.width + x0;
            data.extend_from_slice(&self.data[base..base + w]);
        }
        IntensityRaster {
            height: h,
            width: w,
            data,
        }
    }
}

/// Three-channel raster of Pauli powers, channel-planar (p1, p2, p3).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliPowerRaster {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PauliPowerRaster {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, PolarimetryError> {
        check_len(height, width, Self::CHANNELS, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Per-pixel Pauli decomposition of a covariance raster.
pub fn pauli_powers(r: &C3Raster) -> PauliPowerRaster {
    let plane = r.height() * r.width();
    let mut data = vec![0.0; 3 * plane];
    let (r11, r13, r22, r33) = (
        r.channel(CH_R11),
        r.channel(CH_R13),
        r.channel(CH_R22),
        r.channel(CH_R33),
    );
    for i in 0..plane {
        let half = 0.5 * (r11[i] + r33[i]);
        data[i] = half + r13[i];
        data[plane + i] = half - r13[i];
        data[2 * plane + i] = r22[i];
    }
    PauliPowerRaster {
        height: r.height(),
        width: r.width(),
        data,
    }
}

/// Extracts the single-polarization intensity image of one channel.
///
/// The stored cross-pol channel is `2 |S_hv|^2`, so HV extraction halves it
/// and returns `|S_hv|^2`; consumers (the polarimetric loss in particular)
/// rely on that convention living here.
pub fn intensity_extract(r: &C3Raster, mode: PolMode) -> IntensityRaster {
    let (ch, k) = intensity_channel(mode);
    let data: Vec<f64> = r.channel(ch).iter().map(|v| v * k).collect();
    IntensityRaster {
        height: r.height(),
        width: r.width(),
        data,
    }
}

/// `(channel index, scale factor)` realising [`intensity_extract`] on packed
/// storage; shared with the tensor-space loss path.
pub fn intensity_channel(mode: PolMode) -> (usize, f64) {
    match mode {
        PolMode::HH => (CH_R11, 1.0),
        PolMode::HV => (CH_R22, 0.5),
        PolMode::VV => (CH_R33, 1.0),
    }
}

/// Spatial multilook: channel-wise box average over `factor x factor` blocks.
pub fn multilook_downsample(r: &C3Raster, factor: usize) -> Result<C3Raster, PolarimetryError> {
    assert!(factor > 0, "factor must be positive");
    if r.height() % factor != 0 || r.width() % factor != 0 {
        return Err(PolarimetryError::NonDivisibleDims {
            height: r.height(),
            width: r.width(),
            factor,
        });
    }
    let (oh, ow) = (r.height() / factor, r.width() / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = C3Raster::zeros(oh, ow);
    for c in 0..C3Raster::CHANNELS {
        let src = r.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..factor {
                    let row = (oy * factor + dy) * r.width() + ox * factor;
                    for dx in 0..factor {
                        acc += src[row + dx];
                    }
                }
                out.data[(c * oh + oy) * ow + ox] = acc * norm;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignatureKind {
    /// Receive polarization equals the transmit polarization.
    CoPol,
    /// Receive polarization orthogonal to the transmit polarization.
    CrossPol,
}

/// Received power over the transmit polarization ellipse, normalised to a
/// maximum of one.
#[derive(Clone, Debug)]
pub struct SignatureSurface {
    pub kind: SignatureKind,
    pub step_deg: f64,
    psi_count: usize,
    tau_count: usize,
    values: Vec<f64>,
}

impl SignatureSurface {
    pub fn psi_count(&self) -> usize {
        self.psi_count
    }

    pub fn tau_count(&self) -> usize {
        self.tau_count
    }

    /// Orientation angle of grid column `i`, in degrees within [-90, 90].
    pub fn psi_deg(&self, i: usize) -> f64 {
        -90.0 + i as f64 * self.step_deg
    }

    /// Ellipticity angle of grid row `j`, in degrees within [-45, 45].
    pub fn tau_deg(&self, j: usize) -> f64 {
        -45.0 + j as f64 * self.step_deg
    }

    pub fn value(&self, psi_idx: usize, tau_idx: usize) -> f64 {
        self.values[psi_idx * self.tau_count + tau_idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn jones_vector(psi: f64, tau: f64) -> (Complex64, Complex64) {
    let (sp, cp) = psi.sin_cos();
    let (st, ct) = tau.sin_cos();
    (
        Complex64::new(cp * ct, -sp * st),
        Complex64::new(sp * ct, cp * st),
    )
}

/// Mean received power `<|u_r^T S u_t|^2>` expanded linearly in the packed
/// covariance entries.
fn signature_power(v: &C3Vector, psi: f64, tau: f64, kind: SignatureKind) -> f64 {
    let ut = jones_vector(psi, tau);
    let ur = match kind {
        SignatureKind::CoPol => ut,
        SignatureKind::CrossPol => jones_vector(psi + std::f64::consts::FRAC_PI_2, -tau),
    };
    let a = ur.0 * ut.0;
    let b = ur.0 * ut.1 + ur.1 * ut.0;
    let c = ur.1 * ut.1;
    let c12 = Complex64::new(v.r12(), v.i12()) / SQRT_2;
    let c13 = Complex64::new(v.r13(), v.i13());
    let c23 = Complex64::new(v.r23(), v.i23()) / SQRT_2;
    let p = a.norm_sqr() * v.r11()
        + b.norm_sqr() * 0.5 * v.r22()
        + c.norm_sqr() * v.r33()
        + 2.0 * (a * b.conj() * c12).re
        + 2.0 * (a * c.conj() * c13).re
        + 2.0 * (b * c.conj() * c23).re;
    p.max(0.0)
}

/// Synthesises the polarimetric signature surface of an averaged pixel over
/// orientation psi in [-90, 90] deg and ellipticity tau in [-45, 45] deg.
pub fn polarimetric_signature(
    mean: &C3Vector,
    kind: SignatureKind,
    step_deg: f64,
) -> Result<SignatureSurface, PolarimetryError> {
    if !(step_deg > 0.0) {
        return Err(PolarimetryError::BadSignatureStep(step_deg));
    }
    let psi_steps = 180.0 / step_deg;
    let tau_steps = 90.0 / step_deg;
    if (psi_steps - psi_steps.round()).abs() > 1e-9 || (tau_steps - tau_steps.round()).abs() > 1e-9
    {
        return Err(PolarimetryError::BadSignatureStep(step_deg));
    }
    let psi_count = psi_steps.round() as usize + 1;
    let tau_count = tau_steps.round() as usize + 1;
    let mut values = Vec::with_capacity(psi_count * tau_count);
    for i in 0..psi_count {
        let psi = (-90.0 + i as f64 * step_deg).to_radians();
        for j in 0..tau_count {
            let tau = (-45.0 + j as f64 * step_deg).to_radians();
            values.push(signature_power(mean, psi, tau, kind));
        }
    }
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Ok(SignatureSurface {
        kind,
        step_deg,
        psi_count,
        tau_count,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    pub fn trihedral() -> C3Vector {
        s_to_c3(&ScatteringMatrix::real(1.0, 0.0, 1.0))
    }

    pub fn dihedral() -> C3Vector {
        s_to_c3(&ScatteringMatrix::real(1.0, 0.0, -1.0))
    }

    fn random_psd(rng: &mut impl Rng) -> C3Vector {
        let mut a = CMat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        let m = a * a.adjoint();
        c3_pack(&m).expect("A A^H is Hermitian")
    }

    #[test]
    fn canonical_vectorisations() {
        assert_eq!(trihedral().0, [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dihedral().0, [1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let cross = s_to_c3(&ScatteringMatrix::real(0.0, 1.0, 0.0));
        assert_eq!(cross.0, [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn unpack_of_trihedral_layout() {
        let m = c3_unpack(&trihedral());
        let expect = [
            [1.0, 0.0, 1.0],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], Complex64::new(expect[i][j], 0.0));
            }
        }
    }

    #[test]
    fn pack_rejects_non_hermitian() {
        let mut m = c3_unpack(&trihedral());
        m[(1, 0)] = Complex64::new(0.5, 0.0); // breaks conj symmetry with (0,1)
        assert!(matches!(
            c3_pack(&m),
            Err(PolarimetryError::NotHermitian { .. })
        ));
    }

    #[test]
    fn coherency_of_canonical_targets() {
        let t = c3_to_t3(&trihedral());
        assert_eq!(t.0, [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = c3_to_t3(&dihedral());
        assert_eq!(d.0, [0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn coherency_matches_matrix_similarity() {
        // Independent route: T = U C U^H with the explicit unitary.
        let s = 1.0 / SQRT_2;
        let u = Matrix3::new(
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let v = random_psd(&mut rng);
            let t_fast = c3_to_t3(&v);
            let t_mat = u * c3_unpack(&v) * u.adjoint();
            let t_ref = c3_pack(&t_mat).unwrap();
            for (a, b) in t_fast.0.iter().zip(t_ref.0.iter()) {
                assert!((a - b).abs() <= 1e-12 * span(&v).max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn trace_is_conserved() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let v = random_psd(&mut rng);
            let t = c3_to_t3(&v);
            assert!((t.trace() - span(&v)).abs() <= 1e-12 * span(&v));
        }
    }

    #[test]
    fn pauli_of_canonical_targets() {
        assert_eq!(pauli_powers_of(&trihedral()), [2.0, 0.0, 0.0]);
        assert_eq!(pauli_powers_of(&dihedral()), [0.0, 2.0, 0.0]);
        let cross = s_to_c3(&ScatteringMatrix::real(0.0, 1.0, 0.0));
        assert_eq!(pauli_powers_of(&cross), [0.0, 0.0, 2.0]);
    }

    #[test]
    fn pauli_completeness_and_scatterer_consistency() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v = random_psd(&mut rng);
            let p = pauli_powers_of(&v);
            let s = span(&v);
            assert!((p[0] + p[1] + p[2] - s).abs() <= 1e-12 * s);
        }
        for _ in 0..100 {
            let s = ScatteringMatrix::new(
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
            );
            let p = pauli_powers_of(&s_to_c3(&s));
            let expect = [
                (s.s_hh + s.s_vv).norm_sqr() / 2.0,
                (s.s_hh - s.s_vv).norm_sqr() / 2.0,
                2.0 * s.s_hv.norm_sqr(),
            ];
            for (a, b) in p.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b));
            }
        }
    }

    #[test]
    fn span_of_canonical_targets() {
        assert_eq!(span(&trihedral()), 2.0);
        assert_eq!(span(&dihedral()), 2.0);
        assert_eq!(span(&C3Vector::zero()), 0.0);
    }

    #[test]
    fn intensity_extraction_conventions() {
        let r = C3Raster::constant(2, 2, trihedral());
        assert_eq!(intensity_extract(&r, PolMode::VV).get(0, 0), 1.0);
        let cross = C3Raster::constant(2, 2, s_to_c3(&ScatteringMatrix::real(0.0, 1.0, 0.0)));
        assert_eq!(intensity_extract(&cross, PolMode::HV).get(0, 0), 1.0);
        assert_eq!(intensity_extract(&cross, PolMode::HH).get(0, 0), 0.0);
    }

    #[test]
    fn extraction_commutes_with_multilook() {
        // Both operators are linear and channel-wise: brute force on a random
        // 4x4 raster, every mode.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let r = C3Raster::from_fn(4, 4, |_, _| random_psd(&mut rng));
        for mode in [PolMode::HH, PolMode::HV, PolMode::VV] {
            let a = intensity_extract(&multilook_downsample(&r, 2).unwrap(), mode);
            let b = intensity_extract(&r, mode);
            for oy in 0..2 {
                for ox in 0..2 {
                    let mean = (b.get(2 * oy, 2 * ox)
                        + b.get(2 * oy, 2 * ox + 1)
                        + b.get(2 * oy + 1, 2 * ox)
                        + b.get(2 * oy + 1, 2 * ox + 1))
                        / 4.0;
                    assert!((a.get(oy, ox) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn multilook_averages_blocks() {
        let c = C3Raster::constant(4, 4, trihedral());
        let d = multilook_downsample(&c, 2).unwrap();
        assert_eq!(d.height(), 2);
        assert_eq!(d.get(1, 1), trihedral());

        let mut r = C3Raster::zeros(2, 2);
        for (i, val) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
            let mut v = [0.0; 9];
            v.iter_mut().for_each(|s| *s = *val);
            r.set(i / 2, i % 2, C3Vector(v));
        }
        let d = multilook_downsample(&r, 2).unwrap();
        assert_eq!(d.get(0, 0).r11(), 2.5);

        assert!(multilook_downsample(&C3Raster::zeros(3, 4), 2).is_err());
    }

    #[test]
    fn signature_of_trihedral_vanishes_at_circular() {
        let s = polarimetric_signature(&trihedral(), SignatureKind::CoPol, 1.0).unwrap();
        assert_eq!(s.psi_count(), 181);
        assert_eq!(s.tau_count(), 91);
        for i in 0..s.psi_count() {
            assert!(s.value(i, 0) < 1e-10, "tau = -45");
            assert!(s.value(i, 90) < 1e-10, "tau = +45");
            assert!((s.value(i, 45) - 1.0).abs() < 1e-12, "tau = 0 is the peak");
        }
    }

    #[test]
    fn signature_of_dihedral_vanishes_at_45deg_linear() {
        let s = polarimetric_signature(&dihedral(), SignatureKind::CoPol, 1.0).unwrap();
        // psi = -45 and +45 at tau = 0
        assert!(s.value(45, 45) < 1e-10);
        assert!(s.value(135, 45) < 1e-10);
    }

    #[test]
    fn signature_bounds_and_normalisation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for kind in [SignatureKind::CoPol, SignatureKind::CrossPol] {
            for _ in 0..10 {
                let v = random_psd(&mut rng);
                let s = polarimetric_signature(&v, kind, 5.0).unwrap();
                let mut max = 0.0f64;
                for &val in s.values() {
                    assert!((0.0..=1.0).contains(&val));
                    max = max.max(val);
                }
                assert_eq!(max, 1.0);
            }
        }
        let zero = polarimetric_signature(&C3Vector::zero(), SignatureKind::CoPol, 5.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn signature_step_must_divide_ranges() {
        assert!(polarimetric_signature(&trihedral(), SignatureKind::CoPol, 7.0).is_err());
        assert!(polarimetric_signature(&trihedral(), SignatureKind::CoPol, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip_is_bit_exact(vals in proptest::array::uniform9(-1e12f64..1e12)) {
            let v = C3Vector(vals);
            let back = c3_pack(&c3_unpack(&v)).unwrap();
            prop_assert_eq!(v.0, back.0);
        }
    }
}
