//! Versioned binary checkpoints.
//!
//! Layout: magic `TPCK`, a `u32` version, the little-endian payload (config,
//! trainer state, pool pick-generator position and cache), and a trailing
//! SHA-256 of everything before it. All floats are raw IEEE-754 bits, so a
//! save/load/save round trip is byte-identical and a resumed run cannot
//! drift from the uninterrupted one.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pool::MatrixPool;
use crate::probing::ProbingVectorSet;
use crate::trainer::{Trainer, TrainerState, TrainingConfig};

const MAGIC: &[u8; 4] = b"TPCK";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        Self { buf }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn f64_slice(&mut self, values: &[f64]) {
        self.u64(values.len() as u64);
        for &v in values {
            self.f64(v);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let digest = Sha256::digest(&self.buf);
        self.buf.extend_from_slice(&digest);
        self.buf
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "unexpected end of file at byte {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64_slice(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        if len > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("implausible length {len}")));
        }
        (0..len).map(|_| self.f64()).collect()
    }
}

fn write_config(w: &mut Writer, c: &TrainingConfig) {
    w.u64(c.l as u64);
    w.u64(c.n_p as u64);
    w.u64(c.n_z as u64);
    w.f64(c.eta);
    w.f64(c.alpha);
    w.u64(c.n_r as u64);
    w.u64(c.n_training);
    w.u64(c.bootstrap_len);
    w.u64(c.seed);
    w.f64(c.noise_sigma);
    w.f64(c.solver_tol);
    w.u64(c.solver_max_iter as u64);
    w.u64(c.log_stride);
}

fn read_config(r: &mut Reader) -> Result<TrainingConfig> {
    Ok(TrainingConfig {
        l: r.u64()? as usize,
        n_p: r.u64()? as usize,
        n_z: r.u64()? as usize,
        eta: r.f64()?,
        alpha: r.f64()?,
        n_r: r.u64()? as usize,
        n_training: r.u64()?,
        bootstrap_len: r.u64()?,
        seed: r.u64()?,
        noise_sigma: r.f64()?,
        solver_tol: r.f64()?,
        solver_max_iter: r.u64()? as usize,
        log_stride: r.u64()?,
    })
}

pub fn save(trainer: &Trainer, path: &Path) -> Result<()> {
    let state = &trainer.state;
    let mut w = Writer::new();
    write_config(&mut w, &state.config);

    w.u64(state.t);
    match state.gamma0 {
        Some(g) => {
            w.u32(1);
            w.f64(g);
        }
        None => {
            w.u32(0);
            w.f64(0.0);
        }
    }
    w.f64_slice(&state.gamma_history);
    w.f64_slice(state.w.as_flat());
    w.f64_slice(state.delta_prev.as_flat());
    w.u64(state.train_matvecs);
    w.u64(state.wasted_matvecs);
    w.u64(state.momentum_search_steps);
    w.u64(state.rejected_updates);
    w.u64(state.degenerate_searches);

    w.u64(trainer.pool.pick_rng_state());
    let (evals, matvecs) = trainer.pool.counters();
    w.u64(evals);
    w.u64(matvecs);
    w.u64(trainer.pool.len() as u64);
    for entry in trainer.pool.entries() {
        match entry.cached_trace {
            Some(t) => {
                w.buf.push(1);
                w.f64(t);
            }
            None => w.buf.push(0),
        }
    }

    fs::write(path, w.finish())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Trainer> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::CorruptCheckpoint("file too short".into()));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
    }
    if &payload[..4] != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let mut r = Reader { bytes: payload, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { got: version, expected: VERSION });
    }

    let config = read_config(&mut r)?;
    config.validate().map_err(|e| {
        Error::CorruptCheckpoint(format!("invalid config in checkpoint: {e}"))
    })?;

    let t = r.u64()?;
    let has_gamma0 = r.u32()? == 1;
    let gamma0_value = r.f64()?;
    let gamma_history = r.f64_slice()?;
    let w_flat = r.f64_slice()?;
    let delta_flat = r.f64_slice()?;
    let w = ProbingVectorSet::from_flat(config.n_p, config.l, w_flat)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let delta_prev = ProbingVectorSet::from_flat(config.n_p, config.l, delta_flat)
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let train_matvecs = r.u64()?;
    let wasted_matvecs = r.u64()?;
    let momentum_search_steps = r.u64()?;
    let rejected_updates = r.u64()?;
    let degenerate_searches = r.u64()?;

    let pick_rng_state = r.u64()?;
    let hutchinson_evals = r.u64()?;
    let estimation_matvecs = r.u64()?;
    let pool_len = r.u64()? as usize;
    if pool_len != config.n_r {
        return Err(Error::CorruptCheckpoint(format!(
            "pool length {pool_len} does not match config Nr {}",
            config.n_r
        )));
    }
    let mut caches = Vec::with_capacity(pool_len);
    for _ in 0..pool_len {
        let flag = r.take(1)?[0];
        match flag {
            0 => caches.push(None),
            1 => caches.push(Some(r.f64()?)),
            other => {
                return Err(Error::CorruptCheckpoint(format!("bad cache flag {other}")))
            }
        }
    }
    if r.pos != payload.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            payload.len() - r.pos
        )));
    }

    let mut pool = MatrixPool::generate(
        config.l,
        config.n_r,
        config.noise_sigma,
        config.seed,
        config.n_z,
        config.solver_settings(),
    )?;
    pool.restore(pick_rng_state, caches, hutchinson_evals, estimation_matvecs)?;

    let state = TrainerState {
        config,
        w,
        delta_prev,
        t,
        gamma_history,
        gamma0: has_gamma0.then_some(gamma0_value),
        train_matvecs,
        wasted_matvecs,
        momentum_search_steps,
        rejected_updates,
        degenerate_searches,
    };
    Ok(Trainer::from_parts(state, pool))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> TrainingConfig {
        TrainingConfig {
            l: 8,
            n_p: 2,
            n_z: 4,
            eta: 0.6,
            alpha: 1e-4,
            n_r: 6,
            n_training: 40,
            bootstrap_len: 12,
            seed: 9,
            noise_sigma: 0.1,
            solver_tol: 1e-10,
            solver_max_iter: 200,
            log_stride: 1,
        }
    }

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "traceprobe-ckpt-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempdir();
        let path_a = dir.join("a.tpck");
        let path_b = dir.join("b.tpck");
        let mut trainer = Trainer::new(config()).unwrap();
        trainer.run_until(17, None).unwrap();
        trainer.save_checkpoint(&path_a).unwrap();
        let loaded = Trainer::load_checkpoint(&path_a).unwrap();
        loaded.save_checkpoint(&path_b).unwrap();
        assert_eq!(fs::read(&path_a).unwrap(), fs::read(&path_b).unwrap());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn resumed_run_reproduces_uninterrupted_log() {
        let dir = tempdir();
        let path = dir.join("mid.tpck");

        let mut straight = Trainer::new(config()).unwrap();
        straight.run_until(40, None).unwrap();

        let mut first_half = Trainer::new(config()).unwrap();
        first_half.run_until(20, None).unwrap();
        first_half.save_checkpoint(&path).unwrap();
        let mut resumed = Trainer::load_checkpoint(&path).unwrap();
        resumed.run_until(40, None).unwrap();

        let mut combined = first_half.log.rows.clone();
        combined.extend(resumed.log.rows.clone());
        assert_eq!(combined, straight.log.rows);
        assert_eq!(resumed.state.w, straight.state.w);
        assert_eq!(resumed.state.train_matvecs, straight.state.train_matvecs);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempdir();
        let path = dir.join("trunc.tpck");
        let trainer = Trainer::new(config()).unwrap();
        trainer.save_checkpoint(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            Trainer::load_checkpoint(&path),
            Err(Error::CorruptCheckpoint(_))
        ));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn flipped_byte_is_rejected() {
        let dir = tempdir();
        let path = dir.join("flip.tpck");
        let trainer = Trainer::new(config()).unwrap();
        trainer.save_checkpoint(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            Trainer::load_checkpoint(&path),
            Err(Error::CorruptCheckpoint(_))
        ));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempdir();
        let path = dir.join("ver.tpck");
        let trainer = Trainer::new(config()).unwrap();
        trainer.save_checkpoint(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99; // bump the version field
        // Re-seal the checksum so only the version differs.
        let payload_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..payload_len]);
        bytes[payload_len..].copy_from_slice(&digest);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            Trainer::load_checkpoint(&path),
            Err(Error::CheckpointVersion { got: 99, expected: 1 })
        ));
        fs::remove_dir_all(dir).unwrap();
    }
}
