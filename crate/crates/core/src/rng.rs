//! Seedable random streams for reproducible, parallel replications.
//!
//! Each [`RngStream`] is a ChaCha12 generator whose key is expanded from a
//! master seed and whose 64-bit stream word is the replication index. Two
//! streams with the same key and different stream words share no counter
//! space, so replications can run in any order on any number of threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// SplitMix64 step, used only to expand a 64-bit seed into a 256-bit key.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha12Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        // p = 0 never fires, p = 1 always does
        self.uniform() < p
    }

    /// Gamma(shape, 1). Shapes below one use the `U^(1/shape)` boost.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let dist =
            Gamma::new(shape, 1.0).map_err(|_| Error::invalid(format!("gamma shape must be positive, got {shape}")))?;
        let mut x: f64 = dist.sample(&mut self.inner);
        // underflow guard: keep components strictly positive
        if x <= 0.0 {
            x = f64::MIN_POSITIVE;
        }
        Ok(x)
    }

    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64> {
        let x = self.gamma(a)?;
        let y = self.gamma(b)?;
        Ok(x / (x + y))
    }

    /// Dirichlet draw written into `out`, by normalizing independent gammas.
    pub fn dirichlet_into(&mut self, alphas: &[f64], out: &mut [f64]) -> Result<()> {
        if alphas.len() != out.len() {
            return Err(Error::invalid("dirichlet output length mismatch"));
        }
        if alphas.len() < 2 {
            return Err(Error::invalid("dirichlet needs at least two components"));
        }
        let mut sum = 0.0;
        for (o, &a) in out.iter_mut().zip(alphas) {
            *o = self.gamma(a)?;
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        Ok(())
    }

    pub fn dirichlet(&mut self, alphas: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; alphas.len()];
        self.dirichlet_into(alphas, &mut out)?;
        Ok(out)
    }

    /// Simple random sample of `k` distinct indices from `0..n`, by a
    /// partial Fisher-Yates shuffle.
    pub fn srswor(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::invalid(format!(
                "cannot sample {k} items without replacement from {n}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        self.partial_shuffle(&mut idx, k);
        idx.truncate(k);
        Ok(idx)
    }

    /// Marks a simple random sample of `k` positions in `mask`, reusing
    /// `scratch` as the index array.
    pub fn srswor_mask(&mut self, k: usize, mask: &mut [bool], scratch: &mut Vec<usize>) -> Result<()> {
        let n = mask.len();
        if k > n {
            return Err(Error::invalid(format!(
                "cannot sample {k} items without replacement from {n}"
            )));
        }
        scratch.clear();
        scratch.extend(0..n);
        self.partial_shuffle(scratch, k);
        mask.fill(false);
        for &i in &scratch[..k] {
            mask[i] = true;
        }
        Ok(())
    }

    fn partial_shuffle(&mut self, idx: &mut [usize], k: usize) {
        let n = idx.len();
        for i in 0..k {
            let j = i + self.inner.random_range(0..n - i);
            idx.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
