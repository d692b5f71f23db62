use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kernel::dyadic_step;

use super::rng::GaussianStream;

const MAGIC: &[u8; 4] = b"RFBM";
const VERSION: u32 = 1;

/// Brownian increments `Δ_k^m B`, `k = 1..2^m`, in `d` channels (rows are `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicIncrements {
    m: u32,
    seed: u64,
    stream_id: u64,
    deltas: Array2<f64>,
}

impl DyadicIncrements {
    /// Wrap explicit increments; the matrix must have `2^m` rows.
    pub fn from_deltas(m: u32, deltas: Array2<f64>, seed: u64, stream_id: u64) -> Result<Self> {
        if m > 30 {
            return Err(Error::domain(format!("level m = {m} exceeds 30")));
        }
        if deltas.nrows() != 1usize << m {
            return Err(Error::DimensionMismatch {
                expected: 1 << m,
                found: deltas.nrows(),
            });
        }
        if deltas.ncols() == 0 {
            return Err(Error::invalid("dimension d must be at least 1"));
        }
        Ok(Self {
            m,
            seed,
            stream_id,
            deltas: deltas.as_standard_layout().into_owned(),
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn d(&self) -> usize {
        self.deltas.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn deltas(&self) -> &Array2<f64> {
        &self.deltas
    }

    /// Block sums over `2^{self.m - m}` consecutive increments.
    pub fn coarsen(&self, m: u32) -> Result<Self> {
        if m > self.m {
            return Err(Error::LevelMismatch(format!(
                "cannot coarsen level {} to finer level {m}",
                self.m
            )));
        }
        let r = 1usize << (self.m - m);
        let n = 1usize << m;
        let d = self.d();
        let mut out = Array2::<f64>::zeros((n, d));
        for k in 0..n {
            for j in 0..r {
                let src = self.deltas.row(k * r + j);
                for c in 0..d {
                    out[[k, c]] += src[c];
                }
            }
        }
        Ok(Self {
            m,
            seed: self.seed,
            stream_id: self.stream_id,
            deltas: out,
        })
    }

    /// `‖Ḃ(m)‖₂ = (Σ_k 2^m |Δ_k B|²)^{1/2}`, the Cameron–Martin norm of the
    /// piecewise-linear interpolant.
    pub fn cameron_martin_norm(&self) -> f64 {
        let scale = dyadic_step(self.m).recip();
        (self.deltas.iter().map(|x| x * x).sum::<f64>() * scale).sqrt()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.m.to_le_bytes())?;
        w.write_all(&(self.d() as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.stream_id.to_le_bytes())?;
        for x in self.deltas.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, not an increment dump".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        r.read_exact(&mut b4)?;
        let m = u32::from_le_bytes(b4);
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let stream_id = u64::from_le_bytes(b8);
        if m > 30 || d == 0 {
            return Err(Error::Format(format!("implausible header m = {m}, d = {d}")));
        }
        let n = 1usize << m;
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        let deltas = Array2::from_shape_vec((n, d), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::from_deltas(m, deltas, seed, stream_id)
    }
}

/// `2^M` i.i.d. `N(0, 2^{-M})` increments per channel, drawn row by row from
/// the stream `(seed, stream_id)`.
pub fn sample_brownian(m: u32, d: usize, seed: u64, stream_id: u64) -> Result<DyadicIncrements> {
    if m == 0 || m > 30 {
        return Err(Error::domain(format!("level M = {m} outside 1..=30")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension d must be at least 1"));
    }
    let n = 1usize << m;
    let sd = dyadic_step(m).sqrt();
    let mut g = GaussianStream::new(seed, stream_id);
    let data: Vec<f64> = (0..n * d).map(|_| sd * g.next_normal()).collect();
    let deltas = Array2::from_shape_vec((n, d), data).expect("shape matches length");
    DyadicIncrements::from_deltas(m, deltas, seed, stream_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarsen_identity_and_associativity() {
        let x = sample_brownian(6, 2, 1, 2).unwrap();
        assert_eq!(x.coarsen(6).unwrap(), x);
        let direct = x.coarsen(2).unwrap();
        let stepwise = x.coarsen(4).unwrap().coarsen(2).unwrap();
        for (a, b) in direct.deltas().iter().zip(stepwise.deltas().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(x.coarsen(7).is_err());
    }

    #[test]
    fn coarsen_preserves_total() {
        let x = sample_brownian(8, 3, 5, 0).unwrap();
        let c = x.coarsen(0).unwrap();
        for ch in 0..3 {
            let total: f64 = x.deltas().column(ch).sum();
            assert!((c.deltas()[[0, ch]] - total).abs() < 1e-13);
        }
    }

    #[test]
    fn dump_round_trip() {
        let x = sample_brownian(5, 2, 99, 7).unwrap();
        let mut buf = Vec::new();
        x.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 * 3 + 8 * 2 + 8 * 32 * 2);
        assert_eq!(&buf[..4], b"RFBM");
        let y = DyadicIncrements::read_from(buf.as_slice()).unwrap();
        assert_eq!(x, y);
        buf[0] = b'X';
        assert!(DyadicIncrements::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn shape_is_checked() {
        assert!(DyadicIncrements::from_deltas(3, Array2::zeros((7, 1)), 0, 0).is_err());
        assert!(sample_brownian(0, 1, 0, 0).is_err());
        assert!(sample_brownian(3, 0, 0, 0).is_err());
    }
}
