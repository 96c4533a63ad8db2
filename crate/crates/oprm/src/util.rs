//! Seed derivation, a small worker pool, and scalar math helpers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// splitmix64 finalizer; decorrelates derived seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from a base seed and a tag path.
///
/// Streams for (base, tags) and (base, tags') never collide in practice,
/// which keeps per-context / per-step / per-chunk RNGs independent while the
/// whole run stays a pure function of one root seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = mix64(base);
    for &t in tags {
        s = mix64(s ^ t.wrapping_mul(0xd1b54a32d192ed03));
    }
    s
}

/// Seeded RNG for a derived stream.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Map `f` over `0..n` with up to `workers` threads.
///
/// Results come back in index order no matter how the work interleaves, so
/// callers observe bit-identical output for any worker count.
pub fn par_map_indexed<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    match par_try_map_indexed(workers, n, |i| Ok::<T, ()>(f(i))) {
        Ok(v) => v,
        Err(_) => unreachable!(),
    }
}

/// Fallible variant of [`par_map_indexed`].
///
/// On failure returns the error with the *lowest* failing index, again
/// independent of scheduling.
pub fn par_try_map_indexed<T, E, F>(
    workers: usize,
    n: usize,
    f: F,
) -> std::result::Result<Vec<T>, (usize, E)>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> std::result::Result<T, E> + Sync,
{
    if n == 0 {
        return Ok(Vec::new());
    }
    let workers = workers.max(1).min(n);
    if workers == 1 {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(f(i).map_err(|e| (i, e))?);
        }
        return Ok(out);
    }

    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<Option<std::result::Result<T, E>>>> =
        Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                done.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let slots = done.into_inner().unwrap();
    let mut out = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        match slot.expect("worker pool left a slot unfilled") {
            Ok(v) => out.push(v),
            Err(e) => return Err((i, e)),
        }
    }
    Ok(out)
}

/// Default worker budget: `OPRM_WORKERS` if set, else available parallelism.
pub fn default_workers() -> usize {
    if let Ok(v) = std::env::var("OPRM_WORKERS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

/// exp(x) as a rational polynomial around 2^n (Cephes form): ~2 ulp, no
/// libm call, deterministic across platforms. The model hot loops spend
/// most of their scalar time here.
pub fn fast_exp(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const C1: f64 = 6.93145751953125e-1;
    const C2: f64 = 1.42860682030941723212e-6;
    const P: [f64; 3] = [
        1.26177193074810590878e-4,
        3.02994407707441961300e-2,
        9.99999999999999999910e-1,
    ];
    const Q: [f64; 4] = [
        3.00198505138664455042e-6,
        2.52448340349684104192e-3,
        2.27265548208155028766e-1,
        2.00000000000000000005e0,
    ];
    if x > 709.782712893384 {
        return f64::INFINITY;
    }
    if x < -745.133219101941 {
        return 0.0;
    }
    if x.is_nan() {
        return f64::NAN;
    }
    let n = (LOG2E * x + 0.5).floor();
    let r = x - n * C1 - n * C2;
    let rr = r * r;
    let px = r * (P[0] * rr * rr + P[1] * rr + P[2]);
    let qx = Q[0] * rr * rr * rr + Q[1] * rr * rr + Q[2] * rr + Q[3];
    let e = 1.0 + 2.0 * px / (qx - px);
    // e * 2^n via exponent bits; n is within +/- 1075 here.
    let n = n as i64;
    if n >= -1022 && n <= 1023 {
        f64::from_bits(e.to_bits().wrapping_add((n as u64) << 52))
    } else {
        e * (n as f64).exp2()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + fast_exp(-z))
    } else {
        let e = fast_exp(z);
        e / (1.0 + e)
    }
}

/// ln(1 + e^z), computed without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + fast_exp(-z.abs()).ln_1p()
}

/// Inverse of softplus: ln(e^y - 1) for y > 0.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    y + (-(-y).exp_m1()).ln()
}

pub fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

/// d/dz silu(z) = sigma(z) * (1 + z * (1 - sigma(z))).
pub fn silu_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}
