//! Single-file binary checkpoints.
//!
//! Layout: magic `CTRLGS01`, a u32 format version, then named sections
//! (`config`, `gaussians`, `deform`, `windows`, `quantizer`, and optionally
//! `optimizer`), each length-prefixed. All numbers little-endian; every
//! tensor carries its length. Loading a checkpoint and rendering reproduces
//! the saving state's renders bit for bit; with the optimizer section the
//! full training state (including the RNG position) resumes exactly.

use crate::deform::{DeformationField, TemporalQuantizer};
use crate::error::{Error, Result};
use crate::gaussians::GaussianSet;
use crate::train::{AdamTensor, DensifyStats, OptimizerState, TrainConfig, TrainState};
use crate::windows::WindowSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTRLGS01";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(state: &TrainState, path: &Path, include_optimizer: bool) -> Result<()> {
    let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();

    let config_json = serde_json::to_vec(&state.config)
        .map_err(|e| Error::Checkpoint(format!("config serialization: {e}")))?;
    sections.push(("config", config_json));

    let mut g = Vec::new();
    put_u64(&mut g, state.set.len() as u64);
    put_u64(&mut g, state.set.sh_coeff_count as u64);
    put_tensor(&mut g, &state.set.means);
    put_tensor(&mut g, &state.set.rotations);
    put_tensor(&mut g, &state.set.log_scales);
    put_tensor(&mut g, &state.set.opacity_logits);
    put_tensor(&mut g, &state.set.sh);
    sections.push(("gaussians", g));

    let mut d = Vec::new();
    for a in 0..3 {
        put_f64(&mut d, state.field.grids.bounds.min[a]);
    }
    for a in 0..3 {
        put_f64(&mut d, state.field.grids.bounds.max[a]);
    }
    let tensors = crate::deform::FieldGrads::zeros_like(&state.field).tensors().len();
    let mut field = state.field.clone();
    let views = field.param_tensors_mut();
    put_u64(&mut d, tensors as u64);
    for (_, tensor) in views {
        put_tensor(&mut d, tensor);
    }
    sections.push(("deform", d));

    let mut w = Vec::new();
    put_tensor(&mut w, state.quantizer.windows().boundaries());
    sections.push(("windows", w));

    let mut q = Vec::new();
    put_f64(&mut q, state.quantizer.q());
    put_tensor(&mut q, &state.quantizer.cached_timestamps());
    sections.push(("quantizer", q));

    let mut opt_bytes = Vec::new();
    if include_optimizer {
        put_u64(&mut opt_bytes, state.opt.step);
        put_u64(&mut opt_bytes, state.iteration);
        opt_bytes.extend_from_slice(&state.rng.get_seed());
        opt_bytes.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
        for t in &state.opt.gaussians {
            put_tensor(&mut opt_bytes, &t.m);
            put_tensor(&mut opt_bytes, &t.v);
        }
        put_u64(&mut opt_bytes, state.opt.field.len() as u64);
        for t in &state.opt.field {
            put_tensor(&mut opt_bytes, &t.m);
            put_tensor(&mut opt_bytes, &t.v);
        }
        put_tensor(&mut opt_bytes, &state.stats.grad_norm_sum);
        put_u64(&mut opt_bytes, state.stats.observations.len() as u64);
        for &o in &state.stats.observations {
            put_u64(&mut opt_bytes, o as u64);
        }
        sections.push(("optimizer", opt_bytes));
    }

    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, payload) in &sections {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(payload.len() as u64).to_le_bytes())?;
        out.write_all(payload)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: missing CTRLGS01 magic",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: format version {version} not supported by this build (expects {CHECKPOINT_VERSION})",
            path.display()
        )));
    }

    let mut sections = std::collections::HashMap::new();
    let mut off = 12usize;
    while off < bytes.len() {
        let name_len = u32::from_le_bytes(
            bytes
                .get(off..off + 4)
                .ok_or_else(|| Error::Checkpoint("truncated section header".into()))?
                .try_into()
                .unwrap(),
        ) as usize;
        off += 4;
        let name = String::from_utf8(
            bytes
                .get(off..off + name_len)
                .ok_or_else(|| Error::Checkpoint("truncated section name".into()))?
                .to_vec(),
        )
        .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?;
        off += name_len;
        let payload_len = u64::from_le_bytes(
            bytes
                .get(off..off + 8)
                .ok_or_else(|| Error::Checkpoint(format!("section {name}: truncated length")))?
                .try_into()
                .unwrap(),
        ) as usize;
        off += 8;
        let payload = bytes
            .get(off..off + payload_len)
            .ok_or_else(|| Error::Checkpoint(format!("section {name}: truncated payload")))?
            .to_vec();
        off += payload_len;
        sections.insert(name, payload);
    }

    let section = |name: &str| -> Result<&Vec<u8>> {
        sections
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section {name}")))
    };

    let config: TrainConfig = serde_json::from_slice(section("config")?)
        .map_err(|e| Error::Checkpoint(format!("section config: {e}")))?;

    let mut cur = Cursor::new(section("gaussians")?, "gaussians");
    let n = cur.u64()? as usize;
    let k = cur.u64()? as usize;
    let set = GaussianSet {
        means: cur.tensor_exact(n * 3)?,
        rotations: cur.tensor_exact(n * 4)?,
        log_scales: cur.tensor_exact(n * 3)?,
        opacity_logits: cur.tensor_exact(n)?,
        sh: cur.tensor_exact(n * k * 3)?,
        sh_coeff_count: k,
    };

    let mut cur = Cursor::new(section("deform")?, "deform");
    let mut bounds = crate::deform::SceneBounds { min: [0.0; 3], max: [0.0; 3] };
    for a in 0..3 {
        bounds.min[a] = cur.f64()?;
    }
    for a in 0..3 {
        bounds.max[a] = cur.f64()?;
    }
    let tensor_count = cur.u64()? as usize;
    let mut rng_init = ChaCha8Rng::seed_from_u64(0);
    let mut field = DeformationField::new(config.field, bounds, &mut rng_init);
    {
        let views = field.param_tensors_mut();
        if views.len() != tensor_count {
            return Err(Error::Checkpoint(format!(
                "section deform: {tensor_count} tensors stored, architecture expects {}",
                views.len()
            )));
        }
        for (_, tensor) in views {
            let stored = cur.tensor()?;
            if stored.len() != tensor.len() {
                return Err(Error::Checkpoint(format!(
                    "section deform: tensor length {} does not match architecture ({})",
                    stored.len(),
                    tensor.len()
                )));
            }
            tensor.copy_from_slice(&stored);
        }
    }

    let mut cur = Cursor::new(section("windows")?, "windows");
    let boundaries = cur.tensor()?;
    let windows = WindowSet::from_boundaries(boundaries)
        .map_err(|e| Error::Checkpoint(format!("section windows: {e}")))?;

    let mut cur = Cursor::new(section("quantizer")?, "quantizer");
    let q = cur.f64()?;
    let cached = cur.tensor()?;
    let mut quantizer = TemporalQuantizer::new(windows, q)
        .map_err(|e| Error::Checkpoint(format!("section quantizer: {e}")))?;
    quantizer.cache_timestamps(&cached);

    let mut state = TrainState {
        opt: OptimizerState::new(&set, &field),
        stats: DensifyStats::zeros(set.len()),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        iteration: 0,
        config,
        set,
        field,
        quantizer,
    };

    if let Some(payload) = sections.get("optimizer") {
        let mut cur = Cursor::new(payload, "optimizer");
        state.opt.step = cur.u64()?;
        state.iteration = cur.u64()?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(cur.bytes(32)?);
        let word_pos = u128::from_le_bytes(cur.bytes(16)?.try_into().unwrap());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_word_pos(word_pos);
        state.rng = rng;
        for t in &mut state.opt.gaussians {
            let m = cur.tensor_exact(t.m.len())?;
            let v = cur.tensor_exact(t.v.len())?;
            *t = AdamTensor { m, v };
        }
        let field_count = cur.u64()? as usize;
        if field_count != state.opt.field.len() {
            return Err(Error::Checkpoint(format!(
                "section optimizer: {field_count} field tensors, architecture expects {}",
                state.opt.field.len()
            )));
        }
        for t in &mut state.opt.field {
            let m = cur.tensor_exact(t.m.len())?;
            let v = cur.tensor_exact(t.v.len())?;
            *t = AdamTensor { m, v };
        }
        state.stats.grad_norm_sum = cur.tensor_exact(state.set.len())?;
        let obs_len = cur.u64()? as usize;
        let mut obs = Vec::with_capacity(obs_len);
        for _ in 0..obs_len {
            obs.push(cur.u64()? as u32);
        }
        state.stats.observations = obs;
    }

    Ok(state)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, data: &[f64]) {
    put_u64(out, data.len() as u64);
    for v in data {
        put_f64(out, *v);
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    off: usize,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], section: &'static str) -> Cursor<'a> {
        Cursor { data, off: 0, section }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .data
            .get(self.off..self.off + n)
            .ok_or_else(|| Error::Checkpoint(format!("section {}: truncated", self.section)))?;
        self.off += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn tensor_exact(&mut self, expected: usize) -> Result<Vec<f64>> {
        let t = self.tensor()?;
        if t.len() != expected {
            return Err(Error::Checkpoint(format!(
                "section {}: tensor length {} (expected {expected})",
                self.section,
                t.len()
            )));
        }
        Ok(t)
    }
}
