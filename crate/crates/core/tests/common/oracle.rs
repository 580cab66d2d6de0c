//! Direct reimplementations of the built-in functions, written from the
//! textbook definitions without sharing code with the library.

use bencher::bench::{ContinuousFunction, DiscreteFunction};

pub fn bits(word: u32, len: usize) -> Vec<bool> {
    (0..len).map(|i| word >> i & 1 == 1).collect()
}

pub fn discrete(f: DiscreteFunction, x: &[bool]) -> f64 {
    let n = x.len();
    match f {
        DiscreteFunction::OneMax => x.iter().filter(|&&b| b).count() as f64,
        DiscreteFunction::LeadingOnes => {
            let mut k = 0;
            while k < n && x[k] {
                k += 1;
            }
            k as f64
        }
        DiscreteFunction::Linear => {
            let mut total = 0u64;
            for (i, &b) in x.iter().enumerate() {
                if b {
                    total += i as u64 + 1;
                }
            }
            total as f64
        }
        DiscreteFunction::Labs => {
            let s: Vec<i32> = x.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let mut energy = 0i64;
            for k in 1..n {
                let mut c = 0i64;
                for i in 0..n - k {
                    c += (s[i] * s[i + k]) as i64;
                }
                energy += c * c;
            }
            (n * n) as f64 / (2 * energy) as f64
        }
        DiscreteFunction::IsingRing => {
            let mut agree = 0;
            for i in 0..n {
                if x[i] == x[(i + 1) % n] {
                    agree += 1;
                }
            }
            agree as f64
        }
        DiscreteFunction::NQueens => {
            let edge = (n as f64).sqrt().round() as i64;
            let queens: Vec<(i64, i64)> = (0..n)
                .filter(|&i| x[i])
                .map(|i| (i as i64 / edge, i as i64 % edge))
                .collect();
            let mut attacks = 0;
            for a in 0..queens.len() {
                for b in a + 1..queens.len() {
                    let (r1, c1) = queens[a];
                    let (r2, c2) = queens[b];
                    if r1 == r2 || c1 == c2 || (r1 - r2).abs() == (c1 - c2).abs() {
                        attacks += 1;
                    }
                }
            }
            queens.len() as f64 - attacks as f64
        }
        DiscreteFunction::ConcatenatedTrap => {
            const TABLE: [f64; 6] = [4.0, 3.0, 2.0, 1.0, 0.0, 5.0];
            x.chunks(5)
                .map(|block| TABLE[block.iter().filter(|&&b| b).count()])
                .sum::<f64>()
                + 0.0
        }
    }
}

/// Input lengths up to `max_len` that `f` accepts.
pub fn valid_lengths(f: DiscreteFunction, max_len: usize) -> Vec<usize> {
    (1..=max_len)
        .filter(|&d| match f {
            DiscreteFunction::Labs => d >= 2,
            DiscreteFunction::NQueens => {
                let e = (d as f64).sqrt().round() as usize;
                e * e == d
            }
            DiscreteFunction::ConcatenatedTrap => d % 5 == 0,
            _ => true,
        })
        .collect()
}

pub fn continuous(f: ContinuousFunction, u: &[f64]) -> f64 {
    let z: Vec<f64> = u.iter().map(|&v| -5.0 + 10.0 * v).collect();
    let d = z.len() as f64;
    let w = |i: usize| i as f64 / (d - 1.0);
    let mut total = 0.0;
    match f {
        ContinuousFunction::Sphere => {
            for x in &z {
                total += x * x;
            }
        }
        ContinuousFunction::Ellipsoid => {
            for (i, x) in z.iter().enumerate() {
                total += 1e6f64.powf(w(i)) * x * x;
            }
        }
        ContinuousFunction::Rastrigin => {
            for x in &z {
                total += x * x - 10.0 * (2.0 * std::f64::consts::PI * x).cos() + 10.0;
            }
        }
        ContinuousFunction::Rosenbrock => {
            for i in 0..z.len() - 1 {
                total += 100.0 * (z[i] * z[i] - z[i + 1]).powi(2) + (z[i] - 1.0).powi(2);
            }
        }
        ContinuousFunction::Discus => {
            total = 1e6 * z[0] * z[0];
            for x in &z[1..] {
                total += x * x;
            }
        }
        ContinuousFunction::BentCigar => {
            let mut rest = 0.0;
            for x in &z[1..] {
                rest += x * x;
            }
            total = z[0] * z[0] + 1e6 * rest;
        }
        ContinuousFunction::SharpRidge => {
            let mut rest = 0.0;
            for x in &z[1..] {
                rest += x * x;
            }
            total = z[0] * z[0] + 100.0 * rest.sqrt();
        }
        ContinuousFunction::DifferentPowers => {
            for (i, x) in z.iter().enumerate() {
                total += x.abs().powf(2.0 + 4.0 * w(i));
            }
            total = total.sqrt();
        }
        ContinuousFunction::LinearSlope => {
            for (i, x) in z.iter().enumerate() {
                let s = 10f64.powf(w(i));
                total += s * (5.0 - x);
            }
        }
    }
    total
}

pub fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
