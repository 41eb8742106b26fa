//! Polygamma functions not provided by `statrs`.

use std::f64::consts::PI;

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

// Shift the argument up to this value by recurrence before using the
// asymptotic expansions.
const SHIFT: f64 = 10.0;

/// Digamma Ψ(x) for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B_{2k} / (2k) coefficients
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0 - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    acc + x.ln() - 0.5 / x - series
}

/// Trigamma Ψ′(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < SHIFT {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // Σ B_{2k} / x^{2k+1}
    let series = r
        * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0
                    - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * 7.0 / 6.0))))));
    acc + 1.0 / x + 0.5 * r + series / x
}

/// Tetragamma Ψ″(x) for x > 0.
pub fn tetragamma(mut x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < SHIFT {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // −1/x² − 1/x³ − Σ (2k+1) B_{2k} / x^{2k+2}
    let series = r
        * (3.0 / 6.0
            - r * (5.0 / 30.0
                - r * (7.0 / 42.0
                    - r * (9.0 / 30.0 - r * (11.0 * 5.0 / 66.0 - r * (13.0 * 691.0 / 2730.0))))));
    acc - r - r / x - series * r
}

/// Ψ′(1) = π²/6.
pub const TRIGAMMA_ONE: f64 = PI * PI / 6.0;
