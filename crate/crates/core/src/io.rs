//! On-disk formats.
//!
//! Snapshot: the 8-byte magic `KSFLD1\0\0`, then little-endian u32 d,
//! u32 n, f64 L, f64 t and n^d f64 values in grid order.
//!
//! Diagnostics: CSV with header `t,mass,l1,l2,l2m,linf,min,dt`.
//!
//! Ensemble: CSV `id,x1,..,xd` preceded by a `# t=<t> seed=<seed>` comment.

use std::io::{BufRead, Read, Write};

use crate::error::{KsError, Result};
use crate::particles::ParticleEnsemble;
use crate::types::{Grid, ScalarField, StepRecord};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KSFLD1\0\0";
pub const DIAGNOSTICS_HEADER: &str = "t,mass,l1,l2,l2m,linf,min,dt";

pub fn write_snapshot(w: &mut impl Write, field: &ScalarField, t: f64) -> Result<()> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(32 + 8 * g.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&(g.d as u32).to_le_bytes());
    buf.extend_from_slice(&(g.n as u32).to_le_bytes());
    buf.extend_from_slice(&g.half_width.to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Returns the field and its time.
pub fn read_snapshot(r: &mut impl Read) -> Result<(ScalarField, f64)> {
    let mut head = [0u8; 32];
    r.read_exact(&mut head).map_err(|e| KsError::Format(format!("truncated snapshot header: {e}")))?;
    if &head[..8] != SNAPSHOT_MAGIC {
        return Err(KsError::Format("not a field snapshot (bad magic)".into()));
    }
    let u32_at = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |k: usize| f64::from_le_bytes(head[k..k + 8].try_into().expect("8 bytes"));
    let grid = Grid::new(u32_at(8), u32_at(12), f64_at(16)).map_err(|e| KsError::Format(e.to_string()))?;
    let t = f64_at(24);
    let mut body = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut body).map_err(|e| KsError::Format(format!("truncated snapshot body: {e}")))?;
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((ScalarField::new(grid, values)?, t))
}

pub fn write_diagnostics(w: &mut impl Write, records: &[StepRecord]) -> Result<()> {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},{},{},{},{},{},{},{}\n", r.t, r.mass, r.l1, r.l2, r.l2m, r.linf, r.min, r.dt));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_diagnostics(r: impl BufRead) -> Result<Vec<StepRecord>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == DIAGNOSTICS_HEADER => {}
        _ => return Err(KsError::Format(format!("diagnostics CSV must start with `{DIAGNOSTICS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| KsError::Format(format!("diagnostics row {}: {e}", k + 1)))?;
        if v.len() != 8 {
            return Err(KsError::Format(format!("diagnostics row {} has {} columns", k + 1, v.len())));
        }
        out.push(StepRecord { t: v[0], mass: v[1], l1: v[2], l2: v[3], l2m: v[4], linf: v[5], min: v[6], dt: v[7] });
    }
    Ok(out)
}

pub fn write_ensemble(w: &mut impl Write, ens: &ParticleEnsemble) -> Result<()> {
    let d = ens.dim();
    let mut s = format!("# t={} seed={}\nid", ens.t(), ens.seed());
    for a in 1..=d {
        s.push_str(&format!(",x{a}"));
    }
    s.push('\n');
    for i in 0..ens.len() {
        s.push_str(&i.to_string());
        for x in ens.position(i) {
            s.push_str(&format!(",{x}"));
        }
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_ensemble(r: impl BufRead) -> Result<ParticleEnsemble> {
    let mut lines = r.lines();
    let comment = lines.next().transpose()?.unwrap_or_default();
    let mut t = None;
    let mut seed = None;
    for tok in comment.trim_start_matches('#').split_whitespace() {
        if let Some(v) = tok.strip_prefix("t=") {
            t = v.parse::<f64>().ok();
        } else if let Some(v) = tok.strip_prefix("seed=") {
            seed = v.parse::<u64>().ok();
        }
    }
    let (Some(t), Some(seed)) = (t, seed) else {
        return Err(KsError::Format("ensemble CSV needs a `# t=.. seed=..` comment line".into()));
    };
    let header = lines.next().transpose()?.unwrap_or_default();
    let d = header.split(',').count().saturating_sub(1);
    if !header.starts_with("id,") || d == 0 {
        return Err(KsError::Format(format!("bad ensemble header `{header}`")));
    }
    let mut pos = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + 1 {
            return Err(KsError::Format(format!("ensemble row `{line}` has {} columns", cols.len())));
        }
        for c in &cols[1..] {
            pos.push(c.trim().parse::<f64>().map_err(|e| KsError::Format(e.to_string()))?);
        }
    }
    Ok(ParticleEnsemble::new(d, pos, seed)?.with_time(t, 0))
}
