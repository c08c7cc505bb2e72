//! Effective Kramers-doublet model of the ground and excited manifolds.
//!
//! Each manifold is a 4×4 Hamiltonian on `{e+↑, e+↓, e−↑, e−↓}` (orbital
//! `L_z = ±1` times spin `S_z = ±1/2` along the defect axis):
//!
//! ```text
//! H = −Δ·L_z S_z + g_s (b∥ S_z + b⊥ S_x) + f·g_s·b∥·L_z + ε·τ_x
//! ```
//!
//! where `Δ` is the zero-field (spin-orbit) splitting, `f` the orbital
//! quenching factor and `ε` a transverse strain / Jahn–Teller coupling
//! between the two orbital branches. All entries are in Hz.

use nalgebra::{Complex, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::constants::BOHR_MAGNETON_HZ_PER_T;
use crate::error::{Error, Result};
use crate::fitting::lorentzian_unit;

pub type C64 = Complex<f64>;

/// Static constants of one emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    /// Ground-state zero-field splitting, Hz.
    pub delta_gs: f64,
    /// Excited-state zero-field splitting, Hz.
    pub delta_es: f64,
    /// C-line frequency at zero field, Hz.
    pub zpl_freq: f64,
    /// Spontaneous emission rate Γ, 1/s.
    pub gamma_rad: f64,
    /// Spin gyromagnetic ratio, Hz/T.
    #[serde(default = "default_g_spin")]
    pub g_spin: f64,
    pub f_orb_gs: f64,
    pub f_orb_es: f64,
    /// Transverse strain per manifold, Hz.
    pub strain_gs: f64,
    pub strain_es: f64,
}

fn default_g_spin() -> f64 {
    2.0 * BOHR_MAGNETON_HZ_PER_T
}

impl EmitterParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.delta_gs,
            self.delta_es,
            self.zpl_freq,
            self.gamma_rad,
            self.g_spin,
            self.f_orb_gs,
            self.f_orb_es,
            self.strain_gs,
            self.strain_es,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("emitter parameters must be finite"));
        }
        if !(self.delta_gs > 0.0 && self.delta_es > 0.0 && self.gamma_rad > 0.0) {
            return Err(Error::invalid(
                "delta_gs, delta_es and gamma_rad must be positive",
            ));
        }
        for (name, f) in [("f_orb_gs", self.f_orb_gs), ("f_orb_es", self.f_orb_es)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("{name} = {f} outside [0, 1]")));
            }
        }
        if self.strain_gs < 0.0 || self.strain_es < 0.0 {
            return Err(Error::invalid("strain magnitudes must be nonnegative"));
        }
        Ok(())
    }

    fn manifold(&self, m: Manifold) -> (f64, f64, f64) {
        match m {
            Manifold::Ground => (self.delta_gs, self.f_orb_gs, self.strain_gs),
            Manifold::Excited => (self.delta_es, self.f_orb_es, self.strain_es),
        }
    }

    /// Zero-field energy of the lower doublet of a manifold, Hz.
    pub fn lower_doublet_reference(&self, m: Manifold) -> f64 {
        let (delta, _, strain) = self.manifold(m);
        -(0.5 * delta).hypot(strain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Ground,
    Excited,
}

/// Magnetic field in the crystal frame and the defect's symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Field vector, T.
    pub b_crystal: [f64; 3],
    /// Unit vector along the defect axis.
    pub defect_axis: [f64; 3],
}

impl FieldConfig {
    /// `magnitude` T along [001] acting on a [111]-oriented defect.
    pub fn along_001(magnitude: f64) -> Self {
        let s = 1.0 / 3f64.sqrt();
        FieldConfig {
            b_crystal: [0.0, 0.0, magnitude],
            defect_axis: [s, s, s],
        }
    }

    /// Field of `magnitude` T parallel to the [111] defect axis.
    pub fn aligned(magnitude: f64) -> Self {
        let s = 1.0 / 3f64.sqrt();
        FieldConfig {
            b_crystal: [magnitude * s; 3],
            defect_axis: [s, s, s],
        }
    }

    pub fn zero() -> Self {
        Self::along_001(0.0)
    }

    pub fn magnitude(&self) -> f64 {
        Vector3::from(self.b_crystal).norm()
    }
}

/// Splits the field into components parallel and perpendicular to the defect axis.
pub fn rotate_field_to_defect_frame(field: &FieldConfig) -> Result<(f64, f64)> {
    let axis = Vector3::from(field.defect_axis);
    if ((axis.norm() - 1.0).abs() > 1e-12) || !axis.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(format!(
            "defect axis must be a unit vector, |axis| = {}",
            axis.norm()
        )));
    }
    let b = Vector3::from(field.b_crystal);
    let b_par = b.dot(&axis);
    let b_perp = (b - axis * b_par).norm();
    Ok((b_par, b_perp))
}

// basis index = 2·orbital + spin, orbital 0 = e+, spin 0 = ↑
const LZ: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
const SZ: [f64; 4] = [0.5, -0.5, 0.5, -0.5];

/// 4×4 manifold Hamiltonian in Hz.
pub fn build_manifold_hamiltonian(
    params: &EmitterParams,
    manifold: Manifold,
    field: &FieldConfig,
) -> Result<Matrix4<C64>> {
    params.validate()?;
    let (b_par, b_perp) = rotate_field_to_defect_frame(field)?;
    let (delta, f_orb, strain) = params.manifold(manifold);
    let g = params.g_spin;

    let mut h = Matrix4::<C64>::zeros();
    for i in 0..4 {
        let diag = -delta * LZ[i] * SZ[i] + g * b_par * SZ[i] + f_orb * g * b_par * LZ[i];
        h[(i, i)] = C64::new(diag, 0.0);
    }
    // S_x = σ_x/2 within each orbital branch
    let sx = C64::new(0.5 * g * b_perp, 0.0);
    for o in [0, 2] {
        h[(o, o + 1)] = sx;
        h[(o + 1, o)] = sx;
    }
    // strain mixes e+ and e− with the spin untouched
    let e = C64::new(strain, 0.0);
    for s in 0..2 {
        h[(s, s + 2)] = e;
        h[(s + 2, s)] = e;
    }
    Ok(h)
}

/// Eigen-decomposition of one manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldEigensystem {
    /// Ascending, Hz.
    pub energies: [f64; 4],
    /// Orthonormal eigenvectors in the `{e+↑, e+↓, e−↑, e−↓}` basis.
    pub states: [Vector4<C64>; 4],
    /// `⟨v|S_z|v⟩` along the defect axis.
    pub spin_projection: [f64; 4],
}

impl ManifoldEigensystem {
    /// Splitting of the lower doublet, Hz.
    pub fn lower_doublet_splitting(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }
}

/// Diagonalizes a Hermitian 4×4 matrix.
///
/// Degenerate pairs are rotated onto the `S_z` eigenbasis within their
/// subspace and ordered spin-down first, so zero-field labels are
/// deterministic.
pub fn eigensystem(h: &Matrix4<C64>) -> Result<ManifoldEigensystem> {
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let asym = (h - h.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if asym > 1e-9 * scale || !h.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian: max |H − H†| = {asym:e}"
        )));
    }
    let (values, vectors) = jacobi_hermitian(h);

    let mut order: [usize; 4] = [0, 1, 2, 3];
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut energies = order.map(|i| values[i]);
    let mut states = order.map(|i| vectors.column(i).into_owned());

    let tol = 1e-12 * scale.max(1.0);
    let mut i = 0;
    while i < 3 {
        if energies[i + 1] - energies[i] <= tol {
            let (a, b) = align_with_spin(&states[i], &states[i + 1]);
            states[i] = a;
            states[i + 1] = b;
            if spin_z(&states[i]) > spin_z(&states[i + 1]) {
                states.swap(i, i + 1);
                energies.swap(i, i + 1);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    let spin_projection = states.each_ref().map(spin_z);
    Ok(ManifoldEigensystem {
        energies,
        states,
        spin_projection,
    })
}

fn spin_z(v: &Vector4<C64>) -> f64 {
    v.iter().zip(SZ).map(|(c, s)| c.norm_sqr() * s).sum()
}

/// Rotates an orthonormal pair so `S_z` is diagonal within its span.
fn align_with_spin(a: &Vector4<C64>, b: &Vector4<C64>) -> (Vector4<C64>, Vector4<C64>) {
    let sz = |v: &Vector4<C64>| Vector4::from_fn(|i, _| v[i] * SZ[i]);
    let m = nalgebra::Matrix2::new(
        a.dotc(&sz(a)),
        a.dotc(&sz(b)),
        b.dotc(&sz(a)),
        b.dotc(&sz(b)),
    );
    let mut full = Matrix4::<C64>::identity();
    full.fixed_view_mut::<2, 2>(0, 0).copy_from(&m);
    full[(2, 2)] = C64::new(0.0, 0.0);
    full[(3, 3)] = C64::new(0.0, 0.0);
    let (_, u) = jacobi_hermitian(&full);
    let na = a * u[(0, 0)] + b * u[(1, 0)];
    let nb = a * u[(0, 1)] + b * u[(1, 1)];
    (na, nb)
}

/// Cyclic complex Jacobi for Hermitian matrices. Returns unsorted
/// eigenvalues and the unitary whose columns are the eigenvectors.
fn jacobi_hermitian(h: &Matrix4<C64>) -> ([f64; 4], Matrix4<C64>) {
    let mut a = *h;
    let mut v = Matrix4::<C64>::identity();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for _sweep in 0..64 {
        let off: f64 = (0..4)
            .flat_map(|p| (p + 1..4).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum();
        if off.sqrt() <= 1e-17 * scale || off == 0.0 {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                if r <= 1e-18 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / r; // e^{iφ}
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let ph_conj = phase.conj(); // e^{−iφ}

                a[(p, p)] = C64::new(app - t * r, 0.0);
                a[(q, q)] = C64::new(aqq + t * r, 0.0);
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..4 {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let nkp = akp * c - ph_conj * akq * s;
                    let nkq = akp * s + ph_conj * akq * c;
                    a[(k, p)] = nkp;
                    a[(k, q)] = nkq;
                    a[(p, k)] = nkp.conj();
                    a[(q, k)] = nkq.conj();
                }
                for k in 0..4 {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - ph_conj * vkq * s;
                    v[(k, q)] = vkp * s + ph_conj * vkq * c;
                }
            }
        }
    }
    ([a[(0, 0)].re, a[(1, 1)].re, a[(2, 2)].re, a[(3, 3)].re], v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionLabel {
    A1,
    A2,
    B1,
    B2,
}

impl TransitionLabel {
    pub const ALL: [TransitionLabel; 4] = [
        TransitionLabel::A1,
        TransitionLabel::A2,
        TransitionLabel::B1,
        TransitionLabel::B2,
    ];

    /// Ground sublevel index (0 = |1⟩↓, 1 = |2⟩↑).
    pub fn ground(self) -> usize {
        match self {
            TransitionLabel::A1 | TransitionLabel::B1 => 0,
            TransitionLabel::A2 | TransitionLabel::B2 => 1,
        }
    }

    /// Excited sublevel index (0 = A, 1 = B).
    pub fn excited(self) -> usize {
        match self {
            TransitionLabel::A1 | TransitionLabel::A2 => 0,
            TransitionLabel::B1 | TransitionLabel::B2 => 1,
        }
    }

    pub fn spin_conserving(self) -> bool {
        self.ground() == self.excited()
    }
}

impl std::fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub label: TransitionLabel,
    /// Hz.
    pub frequency: f64,
    pub relative_strength: f64,
    pub spin_conserving: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroFieldLines {
    pub c_freq: f64,
    pub d_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    /// Always ordered A1, A2, B1, B2.
    pub entries: Vec<Transition>,
    pub zero_field: ZeroFieldLines,
}

impl TransitionTable {
    pub fn get(&self, label: TransitionLabel) -> &Transition {
        &self.entries[label as usize]
    }

    /// `|f(A1) − f(B2)|`, Hz.
    pub fn spin_conserving_splitting(&self) -> f64 {
        (self.get(TransitionLabel::A1).frequency - self.get(TransitionLabel::B2).frequency).abs()
    }
}

/// Optical lines between the lower ground doublet `{|1⟩, |2⟩}` and the
/// lower excited doublet `{A, B}`.
///
/// Strengths use an orbital-conserving dipole, `|⟨e|g⟩|²`, normalized per
/// excited sublevel so each pair sums to 1 and all four sum to 2.
pub fn transition_table(
    gs: &ManifoldEigensystem,
    es: &ManifoldEigensystem,
    params: &EmitterParams,
) -> TransitionTable {
    let g0 = params.lower_doublet_reference(Manifold::Ground);
    let e0 = params.lower_doublet_reference(Manifold::Excited);
    let raw: Vec<f64> = TransitionLabel::ALL
        .iter()
        .map(|l| {
            es.states[l.excited()]
                .dotc(&gs.states[l.ground()])
                .norm_sqr()
        })
        .collect();
    // each excited sublevel decays into the ground doublet with unit weight
    let per_excited = |e: usize| -> f64 {
        TransitionLabel::ALL
            .iter()
            .zip(&raw)
            .filter(|(l, _)| l.excited() == e)
            .map(|(_, s)| s)
            .sum()
    };
    let totals = [per_excited(0), per_excited(1)];
    let entries = TransitionLabel::ALL
        .iter()
        .zip(&raw)
        .map(|(&label, &s)| Transition {
            label,
            frequency: params.zpl_freq + (es.energies[label.excited()] - e0)
                - (gs.energies[label.ground()] - g0),
            relative_strength: match totals[label.excited()] {
                t if t > 0.0 => s / t,
                _ => 0.5,
            },
            spin_conserving: label.spin_conserving(),
        })
        .collect();
    TransitionTable {
        entries,
        zero_field: ZeroFieldLines {
            c_freq: params.zpl_freq,
            d_freq: params.zpl_freq - params.delta_gs,
        },
    }
}

/// Convenience: Hamiltonians, eigensystems and table for one field.
pub fn transitions_at(params: &EmitterParams, field: &FieldConfig) -> Result<TransitionTable> {
    let gs = eigensystem(&build_manifold_hamiltonian(
        params,
        Manifold::Ground,
        field,
    )?)?;
    let es = eigensystem(&build_manifold_hamiltonian(
        params,
        Manifold::Excited,
        field,
    )?)?;
    Ok(transition_table(&gs, &es, params))
}

/// Ground-state qubit splitting `|2⟩ − |1⟩`, Hz.
pub fn qubit_frequency(params: &EmitterParams, field: &FieldConfig) -> Result<f64> {
    let gs = eigensystem(&build_manifold_hamiltonian(
        params,
        Manifold::Ground,
        field,
    )?)?;
    Ok(gs.lower_doublet_splitting())
}

/// Cyclicity of the optical cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BranchingRatio {
    Finite(f64),
    /// No spin-flipping channel at all.
    FullyCycling,
}

impl BranchingRatio {
    /// Numeric value, `+∞` when fully cycling.
    pub fn value(self) -> f64 {
        match self {
            BranchingRatio::Finite(v) => v,
            BranchingRatio::FullyCycling => f64::INFINITY,
        }
    }
}

/// Spin-conserving over spin-flipping strength.
pub fn branching_ratio(table: &TransitionTable) -> BranchingRatio {
    let (cons, flip) = table.entries.iter().fold((0.0, 0.0), |(c, f), t| {
        if t.spin_conserving {
            (c + t.relative_strength, f)
        } else {
            (c, f + t.relative_strength)
        }
    });
    if flip == 0.0 {
        BranchingRatio::FullyCycling
    } else {
        BranchingRatio::Finite(cons / flip)
    }
}

/// PLE intensity on `freq_grid`: population- and strength-weighted,
/// peak-normalized Lorentzians of width `linewidth_fwhm`.
pub fn ple_spectrum(
    table: &TransitionTable,
    linewidth_fwhm: f64,
    freq_grid: &[f64],
    populations: [f64; 2],
) -> Result<Vec<f64>> {
    if !(linewidth_fwhm > 0.0) {
        return Err(Error::invalid("linewidth must be positive"));
    }
    if populations.iter().any(|p| *p < 0.0 || !p.is_finite())
        || (populations[0] + populations[1] - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(
            "ground populations must be nonnegative and sum to 1",
        ));
    }
    Ok(freq_grid
        .iter()
        .map(|&f| {
            table
                .entries
                .iter()
                .map(|t| {
                    populations[t.label.ground()]
                        * t.relative_strength
                        * lorentzian_unit(f, t.frequency, linewidth_fwhm)
                })
                .sum()
        })
        .collect())
}
