/// Huber penalty: `r^2/2` inside `delta`, linear outside.
pub fn huber_norm(residual: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Derivative of [`huber_norm`] with respect to the residual.
pub fn huber_derivative(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

/// IRLS weight `psi(r)/r`, equal to one in the quadratic region.
pub fn huber_weight(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        1.0
    } else {
        delta / a
    }
}
