//! Shared solver fixtures for unit tests; the profile solves are expensive
//! enough that tests reuse one instance.

use std::sync::OnceLock;

use crate::potential::Potential;
use crate::profiles::{self, CorrectorProfile, GridSpec, LayerProfile};

pub(crate) fn sine_layer() -> &'static LayerProfile {
    static CELL: OnceLock<LayerProfile> = OnceLock::new();
    CELL.get_or_init(|| {
        let w = Potential::builtin_sine();
        profiles::solve_layer(&w, &GridSpec::default_for(&w)).unwrap()
    })
}

/// Sine potential normalized to unit mobility, with its layer.
pub(crate) fn unit_sine() -> &'static (Potential, LayerProfile) {
    static CELL: OnceLock<(Potential, LayerProfile)> = OnceLock::new();
    CELL.get_or_init(|| profiles::normalize_for_corrector(&Potential::builtin_sine()).unwrap())
}

pub(crate) fn unit_sine_corrector() -> &'static CorrectorProfile {
    static CELL: OnceLock<CorrectorProfile> = OnceLock::new();
    CELL.get_or_init(|| {
        let (w, layer) = unit_sine();
        profiles::solve_corrector(layer, w).unwrap()
    })
}

/// A two-harmonic multi-well potential whose corrector does not vanish.
pub(crate) fn bumpy_potential() -> Potential {
    Potential::from_fourier(vec![0.575, -0.5, -0.075], vec![], 0.5).unwrap()
}

pub(crate) fn unit_bumpy() -> &'static (Potential, LayerProfile) {
    static CELL: OnceLock<(Potential, LayerProfile)> = OnceLock::new();
    CELL.get_or_init(|| profiles::normalize_for_corrector(&bumpy_potential()).unwrap())
}

pub(crate) fn unit_bumpy_corrector() -> &'static CorrectorProfile {
    static CELL: OnceLock<CorrectorProfile> = OnceLock::new();
    CELL.get_or_init(|| {
        let (w, layer) = unit_bumpy();
        profiles::solve_corrector(layer, w).unwrap()
    })
}

/// Sine potential at unit *effective* mobility (alpha = 2), where tracked
/// transitions follow the unit-coefficient particle system.
pub(crate) fn effective_unit() -> &'static (Potential, LayerProfile) {
    static CELL: OnceLock<(Potential, LayerProfile)> = OnceLock::new();
    CELL.get_or_init(|| {
        let w = Potential::builtin_sine()
            .scale(1.0 / (std::f64::consts::PI * std::f64::consts::PI))
            .unwrap();
        let layer = profiles::solve_layer(&w, &GridSpec::default_for(&w)).unwrap();
        (w, layer)
    })
}
