//! Binary octree files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "LCOCTREE"
//! version      u32      1
//! depth        u32
//! resolution   f64
//! prob_hit     f64
//! prob_miss    f64
//! clamp_min    f64
//! clamp_max    f64
//! max_range    f64
//! leaf_count   u64
//! leaf_count × { i u32, j u32, k u32, log_odds f64 }
//! ```
//!
//! Leaves are written in traversal order, so encoding is deterministic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{OccupancyOctree, OctreeParams, VoxelKey};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LCOCTREE";
const VERSION: u32 = 1;

pub fn write_octree(tree: &OccupancyOctree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(tree, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_octree(path: impl AsRef<Path>) -> Result<OccupancyOctree> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file), path)
}

fn encode(tree: &OccupancyOctree, w: &mut impl Write) -> std::io::Result<()> {
    let p = tree.params();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(p.depth as u32).to_le_bytes())?;
    for v in [p.resolution, p.prob_hit, p.prob_miss, p.clamp_min, p.clamp_max, p.max_range] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(tree.leaf_count() as u64).to_le_bytes())?;
    let mut res = Ok(());
    tree.for_each_leaf(|k, l| {
        if res.is_ok() {
            res = (|| {
                w.write_all(&k.i.to_le_bytes())?;
                w.write_all(&k.j.to_le_bytes())?;
                w.write_all(&k.k.to_le_bytes())?;
                w.write_all(&l.to_le_bytes())
            })();
        }
    });
    res
}

fn decode(r: &mut impl Read, path: &Path) -> Result<OccupancyOctree> {
    let mut offset = 0usize;
    let mut take = |n: usize, what: &str| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(path, format!("byte offset {offset}"), format!("truncated {what}")))?;
        offset += n;
        Ok(buf)
    };
    if take(8, "magic")?.as_slice() != MAGIC {
        return Err(Error::parse(path, "byte offset 0", "not an octree file"));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap());
    let f64_at = |b: Vec<u8>| f64::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4, "version")?);
    if version != VERSION {
        return Err(Error::parse(path, "byte offset 8", format!("unsupported version {version}")));
    }
    let depth = u32_at(take(4, "depth")?);
    let mut vals = [0.0; 6];
    for v in &mut vals {
        *v = f64_at(take(8, "header")?);
    }
    let params = OctreeParams {
        resolution: vals[0],
        depth: u8::try_from(depth).map_err(|_| Error::parse(path, "header", "depth out of range"))?,
        prob_hit: vals[1],
        prob_miss: vals[2],
        clamp_min: vals[3],
        clamp_max: vals[4],
        max_range: vals[5],
    };
    let count = u64::from_le_bytes(take(8, "leaf count")?.try_into().unwrap());
    let mut tree = OccupancyOctree::new(params)?;
    let limit = 1u64 << params.depth;
    for n in 0..count {
        let rec = take(20, "leaf record")?;
        let c = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        let key = VoxelKey::new(c(0), c(4), c(8));
        if [key.i, key.j, key.k].iter().any(|&v| v as u64 >= limit) {
            return Err(Error::parse(path, format!("leaf {n}"), "key outside the tree extent"));
        }
        let l = f64::from_le_bytes(rec[12..20].try_into().unwrap());
        if !l.is_finite() {
            return Err(Error::NonFinite {
                location: format!("{} leaf {n}", path.display()),
            });
        }
        tree.set_leaf(&key, l);
    }
    Ok(tree)
}
