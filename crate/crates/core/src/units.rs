//! Unit conventions: energies in meV, lengths in nm, times in ps.

/// ħ²/(2 mₑ) in meV·nm² (3.80998 eV·Å²).
pub const HBAR2_OVER_2ME: f64 = 38.0998;

/// ħ in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.658212;

/// ħ²/(2m) in meV·nm² for an effective mass `mass_ratio`·mₑ.
#[inline]
pub fn kinetic_prefactor(mass_ratio: f64) -> f64 {
    HBAR2_OVER_2ME / mass_ratio
}
