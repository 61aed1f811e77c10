//! Exact dense state-vector engine for up to four qubits.
//!
//! Qubit 0 is the most significant bit of the basis index, so `|10⟩` is
//! index 2 of a two-qubit register. Measurement bit 0 corresponds to the
//! `+1` eigenvalue of the measured observable.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_QUBITS: usize = 4;
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("register size {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("expected {expected} amplitudes, got {got}")]
    AmplitudeLength { expected: usize, got: usize },
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("qubit index {index} out of range for {num_qubits}-qubit state")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("control and target must differ (both {0})")]
    IndexCollision(usize),
    #[error("operation needs a {expected}-qubit state, got {got}")]
    WrongArity { expected: usize, got: usize },
}

/// Measurement basis for prepare-and-measure protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Eigenvectors `|0⟩`, `|1⟩`.
    Rectilinear,
    /// Eigenvectors `|+⟩`, `|−⟩`.
    Diagonal,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Rectilinear, Basis::Diagonal];

    /// Analyzer angle of the basis in the real x–z plane.
    pub fn angle(self) -> f64 {
        match self {
            Basis::Rectilinear => 0.0,
            Basis::Diagonal => FRAC_PI_4,
        }
    }

    pub fn other(self) -> Basis {
        match self {
            Basis::Rectilinear => Basis::Diagonal,
            Basis::Diagonal => Basis::Rectilinear,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Basis {
        if rng.random::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Rectilinear => "rectilinear",
            Basis::Diagonal => "diagonal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    pub bit: bool,
    pub post_state: PureState,
}

/// Analyzer angles `(a, a', b, b')` for a CHSH evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub alice: [f64; 2],
    pub bob: [f64; 2],
}

impl ChshSettings {
    /// `a = 0, a' = π/4, b = π/8, b' = 3π/8`: maximal violation for Φ+.
    pub fn optimal() -> Self {
        Self {
            alice: [0.0, FRAC_PI_4],
            bob: [FRAC_PI_8, 3.0 * FRAC_PI_8],
        }
    }
}

impl PureState {
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self, QuantumError> {
        let n = amplitudes.len();
        if !n.is_power_of_two() || n < 2 {
            return Err(QuantumError::AmplitudeLength {
                expected: 2,
                got: n,
            });
        }
        let num_qubits = n.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::QubitCount(num_qubits));
        }
        let state = Self {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self, QuantumError> {
        Self::from_amplitudes(amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    /// Computational basis state `|index⟩` on `num_qubits` qubits.
    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self, QuantumError> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(QuantumError::QubitCount(num_qubits));
        }
        let dim = 1 << num_qubits;
        if index >= dim {
            return Err(QuantumError::IndexOutOfRange { index, num_qubits });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn zero() -> Self {
        Self::basis_state(1, 0).expect("one qubit")
    }

    pub fn one() -> Self {
        Self::basis_state(1, 1).expect("one qubit")
    }

    pub fn plus() -> Self {
        Self::from_real(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).expect("normalized")
    }

    pub fn minus() -> Self {
        Self::from_real(&[FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).expect("normalized")
    }

    /// Single-qubit eigenstate of `basis` carrying `bit`.
    pub fn encode(bit: bool, basis: Basis) -> Self {
        match (basis, bit) {
            (Basis::Rectilinear, false) => Self::zero(),
            (Basis::Rectilinear, true) => Self::one(),
            (Basis::Diagonal, false) => Self::plus(),
            (Basis::Diagonal, true) => Self::minus(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &PureState) -> Result<Self, QuantumError> {
        let num_qubits = self.num_qubits + other.num_qubits;
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::QubitCount(num_qubits));
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Overlap-based equality that ignores a global phase.
    pub fn approx_eq_up_to_phase(&self, other: &PureState, tol: f64) -> bool {
        if self.num_qubits != other.num_qubits {
            return false;
        }
        let overlap: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        (overlap.norm() - 1.0).abs() <= tol
    }

    fn check_index(&self, index: usize) -> Result<(), QuantumError> {
        if index >= self.num_qubits {
            return Err(QuantumError::IndexOutOfRange {
                index,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    /// Probability of reading `bit` when `qubit` is measured along the real
    /// analyzer angle `theta` (eigenvector `cos θ|0⟩ + sin θ|1⟩` for bit 0).
    pub fn probability_at_angle(&self, qubit: usize, theta: f64, bit: bool) -> Result<f64, QuantumError> {
        self.check_index(qubit)?;
        let (c, s) = (theta.cos(), theta.sin());
        let mask = self.mask(qubit);
        let p = (0..self.amplitudes.len())
            .filter(|i| i & mask == 0)
            .map(|i| {
                let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | mask]);
                if bit {
                    (a1 * c - a0 * s).norm_sqr()
                } else {
                    (a0 * c + a1 * s).norm_sqr()
                }
            })
            .sum();
        Ok(p)
    }

    pub fn probability(&self, qubit: usize, basis: Basis, bit: bool) -> Result<f64, QuantumError> {
        self.probability_at_angle(qubit, basis.angle(), bit)
    }

    /// Born-rule measurement along analyzer angle `theta`.
    pub fn measure_at_angle<R: Rng + ?Sized>(
        &self,
        qubit: usize,
        theta: f64,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, QuantumError> {
        let p0 = self.probability_at_angle(qubit, theta, false)?;
        let bit = rng.random::<f64>() >= p0;
        let p = if bit { 1.0 - p0 } else { p0 };
        let scale = 1.0 / p.sqrt();
        let (c, s) = (theta.cos(), theta.sin());
        let mask = self.mask(qubit);
        let mut amplitudes = self.amplitudes.clone();
        for i in (0..amplitudes.len()).filter(|i| i & mask == 0) {
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | mask]);
            if bit {
                let comp = (a1 * c - a0 * s) * scale;
                amplitudes[i] = comp * (-s);
                amplitudes[i | mask] = comp * c;
            } else {
                let comp = (a0 * c + a1 * s) * scale;
                amplitudes[i] = comp * c;
                amplitudes[i | mask] = comp * s;
            }
        }
        Ok(MeasurementOutcome {
            bit,
            post_state: PureState {
                num_qubits: self.num_qubits,
                amplitudes,
            },
        })
    }

    pub fn measure<R: Rng + ?Sized>(
        &self,
        qubit: usize,
        basis: Basis,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, QuantumError> {
        self.measure_at_angle(qubit, basis.angle(), rng)
    }

    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self, QuantumError> {
        self.check_index(control)?;
        self.check_index(target)?;
        if control == target {
            return Err(QuantumError::IndexCollision(control));
        }
        let (cm, tm) = (self.mask(control), self.mask(target));
        let amplitudes = (0..self.amplitudes.len())
            .map(|i| {
                let src = if i & cm != 0 { i ^ tm } else { i };
                self.amplitudes[src]
            })
            .collect();
        Ok(Self {
            num_qubits: self.num_qubits,
            amplitudes,
        })
    }

    /// Multiplies the `|1⟩` component of `qubit` by `e^{iθ}`.
    pub fn apply_phase(&self, qubit: usize, theta: f64) -> Result<Self, QuantumError> {
        self.check_index(qubit)?;
        let mask = self.mask(qubit);
        let phase = Complex64::from_polar(1.0, theta);
        let amplitudes = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, &a)| if i & mask != 0 { a * phase } else { a })
            .collect();
        Ok(Self {
            num_qubits: self.num_qubits,
            amplitudes,
        })
    }

    /// Expectation of `O(θ₀) ⊗ O(θ₁)` on qubits `q0`, `q1`, identity
    /// elsewhere, with `O(θ) = cos 2θ Z + sin 2θ X`.
    ///
    /// Identity on the remaining qubits makes this the correlator of the
    /// reduced two-qubit state, so traced-out parties need no density matrix.
    pub fn correlator(&self, q0: usize, theta0: f64, q1: usize, theta1: f64) -> Result<f64, QuantumError> {
        self.check_index(q0)?;
        self.check_index(q1)?;
        if q0 == q1 {
            return Err(QuantumError::IndexCollision(q0));
        }
        let applied = self.apply_observable(q0, theta0).apply_observable(q1, theta1);
        let value: Complex64 = self
            .amplitudes
            .iter()
            .zip(&applied.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(value.re)
    }

    fn apply_observable(&self, qubit: usize, theta: f64) -> Self {
        let (c, s) = ((2.0 * theta).cos(), (2.0 * theta).sin());
        let mask = self.mask(qubit);
        let mut amplitudes = self.amplitudes.clone();
        for i in (0..amplitudes.len()).filter(|i| i & mask == 0) {
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | mask]);
            amplitudes[i] = a0 * c + a1 * s;
            amplitudes[i | mask] = a0 * s - a1 * c;
        }
        Self {
            num_qubits: self.num_qubits,
            amplitudes,
        }
    }
}

pub fn bell_pair(variant: BellState) -> PureState {
    let h = FRAC_1_SQRT_2;
    let amps = match variant {
        BellState::PhiPlus => [h, 0.0, 0.0, h],
        BellState::PhiMinus => [h, 0.0, 0.0, -h],
        BellState::PsiPlus => [0.0, h, h, 0.0],
        BellState::PsiMinus => [0.0, h, -h, 0.0],
    };
    PureState::from_real(&amps).expect("Bell states are normalized")
}

/// CHSH value `|E(a,b) − E(a,b') + E(a',b) + E(a',b')|` of the two qubits
/// left after removing `trace_out` from `state`.
///
/// Correlators are computed exactly from the amplitudes.
pub fn chsh_value(state: &PureState, settings: &ChshSettings, trace_out: &[usize]) -> Result<f64, QuantumError> {
    for &q in trace_out {
        state.check_index(q)?;
    }
    let kept: Vec<usize> = (0..state.num_qubits()).filter(|q| !trace_out.contains(q)).collect();
    if kept.len() != 2 {
        return Err(QuantumError::WrongArity {
            expected: 2,
            got: kept.len(),
        });
    }
    let (qa, qb) = (kept[0], kept[1]);
    let e = |a: f64, b: f64| state.correlator(qa, a, qb, b);
    let [a, a2] = settings.alice;
    let [b, b2] = settings.bob;
    Ok((e(a, b)? - e(a, b2)? + e(a2, b)? + e(a2, b2)?).abs())
}
