//! Driving profiles and the traceless two-level family `H(t) = [a n₃ + i b(t) n₁]·σ`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::linalg::{pauli_along, Mat2, C64, I, ZERO};

/// One term `cos_amp·cos(2πmt/T) + sin_amp·sin(2πmt/T)` of a driving profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub index: u32,
    pub cos_amp: C64,
    pub sin_amp: C64,
}

impl Harmonic {
    pub fn new(index: u32, cos_amp: C64, sin_amp: C64) -> Self {
        Self { index, cos_amp, sin_amp }
    }

    pub fn cos(index: u32, amp: C64) -> Self {
        Self::new(index, amp, ZERO)
    }

    pub fn sin(index: u32, amp: C64) -> Self {
        Self::new(index, ZERO, amp)
    }
}

/// A finite harmonic series `b(t)` with base period `T`.
///
/// Harmonics are kept sorted by index and indices are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingProfile {
    base_period: f64,
    harmonics: Vec<Harmonic>,
}

impl DrivingProfile {
    /// Builds a profile, rejecting duplicate indices.
    pub fn new(base_period: f64, mut harmonics: Vec<Harmonic>) -> Result<Self> {
        if !(base_period.is_finite() && base_period > 0.0) {
            return Err(Error::InvalidModel(format!("base period must be positive, got {base_period}")));
        }
        harmonics.sort_by_key(|h| h.index);
        if harmonics.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(Error::InvalidModel("duplicate harmonic index".into()));
        }
        if harmonics.iter().any(|h| !(h.cos_amp.is_finite() && h.sin_amp.is_finite())) {
            return Err(Error::InvalidModel("non-finite harmonic amplitude".into()));
        }
        Ok(Self { base_period, harmonics })
    }

    /// Builds a profile, summing the amplitudes of terms that share an index.
    pub fn merged(base_period: f64, terms: impl IntoIterator<Item = Harmonic>) -> Result<Self> {
        let mut acc: BTreeMap<u32, (C64, C64)> = BTreeMap::new();
        for h in terms {
            let e = acc.entry(h.index).or_insert((ZERO, ZERO));
            e.0 += h.cos_amp;
            e.1 += h.sin_amp;
        }
        Self::new(base_period, acc.into_iter().map(|(m, (c, s))| Harmonic::new(m, c, s)).collect())
    }

    pub fn zero(base_period: f64) -> Result<Self> {
        Self::new(base_period, Vec::new())
    }

    /// True when every amplitude vanishes, i.e. `b(t) ≡ 0`.
    pub fn is_zero(&self) -> bool {
        self.harmonics.iter().all(|h| h.cos_amp == C64::from(0.0) && h.sin_amp == C64::from(0.0))
    }

    pub fn base_period(&self) -> f64 {
        self.base_period
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    /// Largest harmonic index carrying a nonzero amplitude (0 for a constant or zero profile).
    pub fn max_harmonic(&self) -> u32 {
        self.harmonics
            .iter()
            .filter(|h| h.cos_amp != ZERO || (h.index > 0 && h.sin_amp != ZERO))
            .map(|h| h.index)
            .max()
            .unwrap_or(0)
    }

    fn omega(&self, m: u32) -> f64 {
        TAU * m as f64 / self.base_period
    }

    /// `b(t)` by direct summation.
    pub fn eval(&self, t: f64) -> C64 {
        self.harmonics.iter().fold(ZERO, |acc, h| {
            let (s, c) = (self.omega(h.index) * t).sin_cos();
            acc + h.cos_amp * c + h.sin_amp * s
        })
    }

    /// Exact `db/dt`.
    pub fn derivative(&self, t: f64) -> C64 {
        self.harmonics.iter().fold(ZERO, |acc, h| {
            let w = self.omega(h.index);
            let (s, c) = (w * t).sin_cos();
            acc + (h.sin_amp * c - h.cos_amp * s) * w
        })
    }

    /// `∫₀ᵗ b(s) ds`.
    pub fn integral(&self, t: f64) -> C64 {
        self.harmonics.iter().fold(ZERO, |acc, h| {
            if h.index == 0 {
                return acc + h.cos_amp * t;
            }
            let w = self.omega(h.index);
            let (s, c) = (w * t).sin_cos();
            acc + h.cos_amp * (s / w) + h.sin_amp * ((1.0 - c) / w)
        })
    }

    /// Coefficients `βₙ` of `b(t) = Σₙ βₙ e^{i2πnt/T}`, zero entries omitted.
    pub fn exponential_coefficients(&self) -> BTreeMap<i64, C64> {
        let mut out = BTreeMap::new();
        for h in &self.harmonics {
            let m = h.index as i64;
            if m == 0 {
                *out.entry(0).or_insert(ZERO) += h.cos_amp;
            } else {
                *out.entry(m).or_insert(ZERO) += (h.cos_amp - I * h.sin_amp) / 2.0;
                *out.entry(-m).or_insert(ZERO) += (h.cos_amp + I * h.sin_amp) / 2.0;
            }
        }
        out.retain(|_, v| *v != ZERO);
        out
    }

    /// Applies `f` to every amplitude.
    pub fn map_amplitudes(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            base_period: self.base_period,
            harmonics: self
                .harmonics
                .iter()
                .map(|h| Harmonic::new(h.index, f(h.cos_amp), f(h.sin_amp)))
                .collect(),
        }
    }
}

/// Which axis of the complex plane the static amplitude lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AmplitudeAxis {
    Real,
    Imaginary,
}

/// Static amplitude `a` with `a²` real by construction.
///
/// Stored as a magnitude, an axis and a sign, so `a = ±|a|` or `a = ±i|a|`
/// and `a² = ±|a|²` carries no imaginary part. When built from an energy,
/// that energy is kept verbatim so `energy()` returns it without rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticAmplitude {
    magnitude: f64,
    axis: AmplitudeAxis,
    negated: bool,
    energy: f64,
}

impl StaticAmplitude {
    pub fn real(a: f64) -> Self {
        Self { magnitude: a.abs(), axis: AmplitudeAxis::Real, negated: a.is_sign_negative() && a != 0.0, energy: a * a }
    }

    pub fn imaginary(a_im: f64) -> Self {
        Self {
            magnitude: a_im.abs(),
            axis: AmplitudeAxis::Imaginary,
            negated: a_im.is_sign_negative() && a_im != 0.0,
            energy: -(a_im * a_im),
        }
    }

    /// Accepts `γ` only when `Im(γ²) = 0`, i.e. `γ` real or purely imaginary.
    pub fn from_complex(gamma: C64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::InvalidModel("non-finite static amplitude".into()));
        }
        match (gamma.re == 0.0, gamma.im == 0.0) {
            (_, true) => Ok(Self::real(gamma.re)),
            (true, false) => Ok(Self::imaginary(gamma.im)),
            (false, false) => Err(Error::ComplexStaticEnergy { re: gamma.re, im: gamma.im }),
        }
    }

    /// Principal root of a signed energy: `a = √E` for `E ≥ 0`, `a = i√(-E)` otherwise.
    pub fn from_energy(a_sq: f64) -> Self {
        let a = if a_sq >= 0.0 { Self::real(a_sq.sqrt()) } else { Self::imaginary((-a_sq).sqrt()) };
        Self { energy: a_sq + 0.0, ..a }
    }

    pub fn value(&self) -> C64 {
        let s = if self.negated { -self.magnitude } else { self.magnitude };
        match self.axis {
            AmplitudeAxis::Real => C64::new(s, 0.0),
            AmplitudeAxis::Imaginary => C64::new(0.0, s),
        }
    }

    /// `a²`, exactly real.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn axis(&self) -> AmplitudeAxis {
        self.axis
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }
}

/// Right-handed orthonormal frame `{n₁, n₂, n₃}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    n1: Vector3<f64>,
    n2: Vector3<f64>,
    n3: Vector3<f64>,
}

const FRAME_TOL: f64 = 1e-12;

impl Frame {
    pub fn new(n1: Vector3<f64>, n2: Vector3<f64>, n3: Vector3<f64>) -> Result<Self> {
        let v = [n1, n2, n3];
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (v[i].dot(&v[j]) - expected).abs() > FRAME_TOL {
                    return Err(Error::InvalidModel("frame is not orthonormal".into()));
                }
            }
        }
        if (n1.cross(&n2) - n3).norm() > FRAME_TOL {
            return Err(Error::InvalidModel("frame is not right-handed".into()));
        }
        Ok(Self { n1, n2, n3 })
    }

    pub fn canonical() -> Self {
        Self { n1: Vector3::x(), n2: Vector3::y(), n3: Vector3::z() }
    }

    pub fn vectors(&self) -> [Vector3<f64>; 3] {
        [self.n1, self.n2, self.n3]
    }

    /// `[n₁·σ, n₂·σ, n₃·σ]`.
    pub fn pauli(&self) -> [Mat2; 3] {
        [pauli_along(&self.n1), pauli_along(&self.n2), pauli_along(&self.n3)]
    }
}

impl Default for Frame {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Reduced fraction `α = p/q` with `p, q ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalAlpha {
    p: u32,
    q: u32,
}

pub fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl RationalAlpha {
    pub fn new(p: u32, q: u32) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument(format!("alpha = {p}/{q} must have positive p and q")));
        }
        if gcd(p, q) != 1 {
            return Err(Error::InvalidArgument(format!("alpha = {p}/{q} is not in lowest terms")));
        }
        Ok(Self { p, q })
    }

    /// Reduces `p/q` to lowest terms.
    pub fn reduced(p: u32, q: u32) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument(format!("alpha = {p}/{q} must have positive p and q")));
        }
        let g = gcd(p, q);
        Self::new(p / g, q / g)
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

impl fmt::Display for RationalAlpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for RationalAlpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("alpha must look like p/q, got {s:?}"));
        let (p, q) = match s.trim().split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s.trim(), "1"),
        };
        Self::new(p.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
    }
}

/// Named Hamiltonians of the driven non-Hermitian Rabi family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// `γσz + iμ[cos 2πt + sin 4πt]σx`
    H1,
    /// `γσz + iμ[sin 2πt + cos 4πt]σx`, the variant whose mapped potential is written out explicitly.
    H1b,
    /// `γσz + iμ[sin 2πt + i]σx`
    H2,
    /// `γσz + iμ[cos 2πt + cos 2παt]σx`
    H3,
    /// `γσz + iμ[i cos 2πt + sin 2παt]σx`
    H4,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::H1, Preset::H1b, Preset::H2, Preset::H3, Preset::H4];

    pub fn needs_alpha(self) -> bool {
        matches!(self, Preset::H3 | Preset::H4)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::H1 => "H1",
            Preset::H1b => "H1b",
            Preset::H2 => "H2",
            Preset::H3 => "H3",
            Preset::H4 => "H4",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown preset {s:?} (expected H1, H1b, H2, H3 or H4)")))
    }
}

/// `H(t) = a(n₃·σ) + i b(t)(n₁·σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevelModel {
    amplitude: StaticAmplitude,
    profile: DrivingProfile,
    frame: Frame,
}

impl TwoLevelModel {
    pub fn new(amplitude: StaticAmplitude, profile: DrivingProfile, frame: Frame) -> Self {
        Self { amplitude, profile, frame }
    }

    pub fn amplitude(&self) -> StaticAmplitude {
        self.amplitude
    }

    /// The static amplitude `a`.
    pub fn a(&self) -> C64 {
        self.amplitude.value()
    }

    /// `a²`, the mapped band energy.
    pub fn energy(&self) -> f64 {
        self.amplitude.energy()
    }

    pub fn profile(&self) -> &DrivingProfile {
        &self.profile
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn period(&self) -> f64 {
        self.profile.base_period
    }

    pub fn drive(&self, t: f64) -> C64 {
        self.profile.eval(t)
    }

    pub fn drive_derivative(&self, t: f64) -> C64 {
        self.profile.derivative(t)
    }

    pub fn hamiltonian(&self, t: f64) -> Mat2 {
        let [n1, _, n3] = self.frame.pauli();
        n3 * self.a() + n1 * (I * self.drive(t))
    }

    pub fn with_amplitude(&self, amplitude: StaticAmplitude) -> Self {
        Self { amplitude, ..self.clone() }
    }

    /// Replaces the anti-Hermitian part of the drive by a Hermitian one of the
    /// same size and makes `a` real, so that `H(t)` is Hermitian at every `t`.
    ///
    /// Each amplitude `x + iy` becomes `i(y - x)`, turning `i·b(t)` into the
    /// real function `Re b(t) - Im b(t)`.
    pub fn hermitian_counterpart(&self) -> Self {
        Self {
            amplitude: StaticAmplitude::real(self.amplitude.magnitude),
            profile: self.profile.map_amplitudes(|c| I * (c.im - c.re)),
            frame: self.frame,
        }
    }
}

/// Builds one of the named Hamiltonians in the canonical frame with `a = γ`.
pub fn make_preset(preset: Preset, gamma: C64, mu: f64, alpha: Option<RationalAlpha>) -> Result<TwoLevelModel> {
    let amplitude = StaticAmplitude::from_complex(gamma)?;
    if !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu must be finite, got {mu}")));
    }
    let mu_c = C64::from(mu);
    let profile = match (preset, alpha) {
        (Preset::H3 | Preset::H4, None) => return Err(Error::MissingAlpha { preset: preset.name().into() }),
        (Preset::H1 | Preset::H1b | Preset::H2, Some(a)) => {
            return Err(Error::InvalidArgument(format!("preset {preset} takes no alpha (got {a})")))
        }
        (Preset::H1, None) => DrivingProfile::new(1.0, vec![Harmonic::cos(1, mu_c), Harmonic::sin(2, mu_c)])?,
        (Preset::H1b, None) => DrivingProfile::new(1.0, vec![Harmonic::sin(1, mu_c), Harmonic::cos(2, mu_c)])?,
        (Preset::H2, None) => DrivingProfile::new(1.0, vec![Harmonic::cos(0, I * mu), Harmonic::sin(1, mu_c)])?,
        // period q: cos 2πt is harmonic q, cos 2παt is harmonic p
        (Preset::H3, Some(a)) => {
            DrivingProfile::merged(a.q() as f64, [Harmonic::cos(a.q(), mu_c), Harmonic::cos(a.p(), mu_c)])?
        }
        (Preset::H4, Some(a)) => {
            DrivingProfile::merged(a.q() as f64, [Harmonic::cos(a.q(), I * mu), Harmonic::sin(a.p(), mu_c)])?
        }
    };
    Ok(TwoLevelModel::new(amplitude, profile, Frame::canonical()))
}
