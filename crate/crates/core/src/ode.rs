//! Fixed-step explicit integrators on `Vec<f64>` states: classic RK4 for the
//! per-ε solves and a Fehlberg 4(5) pair (the 5th-order solution, fixed step)
//! for high-resolution reference solves.

/// Right-hand side of y' = f(t, y); writes into `dy`.
pub type Rhs<'a> = &'a mut dyn FnMut(f64, &[f64], &mut [f64]);

fn axpy(out: &mut [f64], y: &[f64], coeffs: &[(f64, &[f64])], h: f64) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in coeffs {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Classic RK4. Returns the state at every node, `steps + 1` entries.
pub fn rk4(f: Rhs, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Vec<Vec<f64>> {
    let n = y0.len();
    let h = (t_end - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    out.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        axpy(&mut tmp, &y, &[(0.5, &k1)], h);
        f(t + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, &y, &[(0.5, &k2)], h);
        f(t + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, &y, &[(1.0, &k3)], h);
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(y.clone());
    }
    out
}

/// Final state of [`rk4`].
pub fn rk4_final(f: Rhs, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Vec<f64> {
    let n = y0.len();
    let h = (t_end - t0) / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        axpy(&mut tmp, &y, &[(0.5, &k1)], h);
        f(t + 0.5 * h, &tmp, &mut k2);
        axpy(&mut tmp, &y, &[(0.5, &k2)], h);
        f(t + 0.5 * h, &tmp, &mut k3);
        axpy(&mut tmp, &y, &[(1.0, &k3)], h);
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// Runge–Kutta–Fehlberg 4(5), fixed step, returning the 5th-order solution at
/// every node. Reference integrator for classical oracle solves.
pub fn rkf45(f: Rhs, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Vec<Vec<f64>> {
    // Fehlberg tableau.
    const A2: f64 = 1.0 / 4.0;
    const A3: [f64; 2] = [3.0 / 32.0, 9.0 / 32.0];
    const A4: [f64; 3] = [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0];
    const A5: [f64; 4] = [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0];
    const A6: [f64; 5] = [
        -8.0 / 27.0,
        2.0,
        -3544.0 / 2565.0,
        1859.0 / 4104.0,
        -11.0 / 40.0,
    ];
    const C: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
    const B5: [f64; 6] = [
        16.0 / 135.0,
        0.0,
        6656.0 / 12825.0,
        28561.0 / 56430.0,
        -9.0 / 50.0,
        2.0 / 55.0,
    ];

    let n = y0.len();
    let h = (t_end - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    out.push(y.clone());
    let mut k: Vec<Vec<f64>> = (0..6).map(|_| vec![0.0; n]).collect();
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        {
            let (k1, _) = k.split_at_mut(1);
            f(t, &y, &mut k1[0]);
        }
        let stages: [&[f64]; 5] = [&[A2], &A3, &A4, &A5, &A6];
        for (j, coeffs) in stages.iter().enumerate() {
            let pairs: Vec<(f64, &[f64])> = coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (*c, k[i].as_slice()))
                .collect();
            axpy(&mut tmp, &y, &pairs, h);
            let (head, tail) = k.split_at_mut(j + 1);
            let _ = head;
            f(t + C[j + 1] * h, &tmp, &mut tail[0]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, b) in B5.iter().enumerate() {
                acc += b * k[j][i];
            }
            y[i] += h * acc;
        }
        out.push(y.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_harmonic_accuracy() {
        let end = std::f64::consts::FRAC_PI_2;
        let path = rk4(
            &mut |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            end,
            1000,
        );
        let last = path.last().unwrap();
        assert!((last[0] - 1.0).abs() < 1e-12);
        assert!(last[1].abs() < 1e-12);
    }

    #[test]
    fn rkf45_beats_rk4_on_exp() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        let a = rk4_final(&mut f.clone(), 0.0, &[1.0], 1.0, 100);
        let b = rkf45(&mut f.clone(), 0.0, &[1.0], 1.0, 100);
        let e = std::f64::consts::E;
        assert!((b.last().unwrap()[0] - e).abs() < (a[0] - e).abs());
        assert!((b.last().unwrap()[0] - e).abs() < 1e-12);
    }
}
