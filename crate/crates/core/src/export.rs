//! Text and binary artifact formats.
//!
//! Every text format is plain CSV with a header row. Times are written
//! 1-based. Floats use Rust's shortest round-trip representation, so a
//! write/read cycle is exact.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::AttributionTable;
use crate::changepoint::ScoreSeries;
use crate::embedding::{EmbeddingSeries, Flavor};
use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, Metric};
use crate::trajectory::Trajectory;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"MENTEMB1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let read = file.read(&mut buf)?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{s}` is not a number")))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes())
}

pub fn embedding_file_name(t: usize) -> String {
    format!("embedding_t{:03}.csv", t + 1)
}

/// One block as CSV: `node,dim_1,…,dim_d`.
pub fn embedding_block_csv(block: &DMatrix<f64>, node_ids: &[String]) -> Result<String> {
    if node_ids.len() != block.nrows() {
        return Err(Error::Validation(format!(
            "{} node ids for {} rows",
            node_ids.len(),
            block.nrows()
        )));
    }
    let mut w = writer();
    let mut header = vec!["node".to_string()];
    header.extend((1..=block.ncols()).map(|k| format!("dim_{k}")));
    w.write_record(&header)?;
    for (i, id) in node_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(block.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Parses a block written by [`embedding_block_csv`].
pub fn parse_embedding_block(text: &str) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = reader(text);
    let d = r.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::Parse(format!(
                "embedding row has {} fields, expected {}",
                rec.len(),
                d + 1
            )));
        }
        ids.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            values.push(parse_f64(v, "embedding entry")?);
        }
    }
    Ok((ids.clone(), DMatrix::from_row_slice(ids.len(), d, &values)))
}

/// Writes `embedding_tNNN.csv` for every time into `dir`.
pub fn write_embedding_csvs(
    dir: &Path,
    y: &EmbeddingSeries,
    node_ids: &[String],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    (0..y.horizon())
        .map(|t| {
            let path = dir.join(embedding_file_name(t));
            fs::write(&path, embedding_block_csv(y.block(t), node_ids)?)?;
            Ok(path)
        })
        .collect()
}

pub fn read_embedding_csvs(
    dir: &Path,
    horizon: usize,
    flavor: Flavor,
) -> Result<(Vec<String>, EmbeddingSeries)> {
    let mut ids = None;
    let mut blocks = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let path = dir.join(embedding_file_name(t));
        let (block_ids, block) = parse_embedding_block(&fs::read_to_string(&path)?)?;
        match &ids {
            None => ids = Some(block_ids),
            Some(prev) if *prev != block_ids => {
                return Err(Error::Parse(format!(
                    "{} lists different nodes",
                    path.display()
                )));
            }
            _ => {}
        }
        blocks.push(block);
    }
    Ok((
        ids.unwrap_or_default(),
        EmbeddingSeries::new(blocks, flavor)?,
    ))
}

/// Header of the binary embedding container.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub n: usize,
    pub dim: usize,
    pub horizon: usize,
    pub flavor: Flavor,
    /// SHA-256 of the payload.
    pub sha256: String,
}

/// `MENTEMB1`, header length (u64 LE), JSON header, then n·d·T f64 LE values
/// ordered by time, node, dimension.
pub fn encode_embedding(y: &EmbeddingSeries) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(8 * y.n() * y.dim() * y.horizon());
    for block in y.blocks() {
        for i in 0..block.nrows() {
            for v in block.row(i).iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = EmbeddingHeader {
        n: y.n(),
        dim: y.dim(),
        horizon: y.horizon(),
        flavor: y.flavor(),
        sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_embedding(bytes: &[u8]) -> Result<(EmbeddingHeader, EmbeddingSeries)> {
    let corrupt = |msg: &str| Error::Parse(format!("embedding container: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| corrupt("truncated"))?;
    if body.len() < len {
        return Err(corrupt("truncated header"));
    }
    let header: EmbeddingHeader = serde_json::from_slice(&body[..len])?;
    let payload = &body[len..];
    if payload.len() != 8 * header.n * header.dim * header.horizon {
        return Err(corrupt("payload length does not match header"));
    }
    if sha256_hex(payload) != header.sha256 {
        return Err(corrupt("checksum mismatch"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let blocks = (0..header.horizon)
        .map(|_| {
            DMatrix::from_row_iterator(
                header.n,
                header.dim,
                values.by_ref().take(header.n * header.dim),
            )
        })
        .collect();
    let y = EmbeddingSeries::new(blocks, header.flavor)?;
    Ok((header, y))
}

/// `T×T` distance matrix; the top-left header cell carries the metric tag.
pub fn distance_csv(d: &DistanceMatrix) -> Result<String> {
    let horizon = d.horizon();
    let mut w = writer();
    let mut header = vec![d.metric().to_string()];
    header.extend((1..=horizon).map(|t| t.to_string()));
    w.write_record(&header)?;
    for t in 0..horizon {
        let mut row = vec![(t + 1).to_string()];
        row.extend(d.distances().row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn parse_distance_csv(text: &str) -> Result<DistanceMatrix> {
    let mut r = reader(text);
    let header = r.headers()?.clone();
    let metric: Metric = header.get(0).unwrap_or_default().parse()?;
    let horizon = header.len().saturating_sub(1);
    let mut values = Vec::with_capacity(horizon * horizon);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != horizon + 1 {
            return Err(Error::Parse(format!(
                "distance row has {} fields, expected {}",
                rec.len(),
                horizon + 1
            )));
        }
        for v in rec.iter().skip(1) {
            values.push(parse_f64(v, "distance")?);
        }
        rows += 1;
    }
    if rows != horizon {
        return Err(Error::Parse(format!(
            "distance matrix has {rows} rows and {horizon} columns"
        )));
    }
    DistanceMatrix::new(metric, DMatrix::from_row_slice(horizon, horizon, &values))
}

pub fn distance_file_name(metric: Metric) -> String {
    format!("distance_{metric}.csv")
}

/// Centered-Gram spectrum: `k,<metric>_eigenvalue`.
pub fn spectrum_csv(d: &DistanceMatrix) -> Result<String> {
    let mut w = writer();
    w.write_record(["k".to_string(), format!("{}_eigenvalue", d.metric())])?;
    for (k, v) in d.spectrum().iter().enumerate() {
        w.write_record([(k + 1).to_string(), v.to_string()])?;
    }
    finish(w)
}

/// `t,dim_1,…,dim_c`.
pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let mut w = writer();
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|k| format!("dim_{k}")));
    w.write_record(&header)?;
    for t in 0..traj.horizon() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(traj.coords.row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Everything in a trajectory except its coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySidecar {
    pub metric: Option<Metric>,
    pub horizon: usize,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub strain: f64,
    pub rank_deficient: bool,
    pub negative_eigenvalues: Vec<f64>,
}

impl From<&Trajectory> for TrajectorySidecar {
    fn from(t: &Trajectory) -> Self {
        Self {
            metric: t.metric,
            horizon: t.horizon(),
            dim: t.dim(),
            eigenvalues: t.eigenvalues.clone(),
            spectrum: t.spectrum.clone(),
            strain: t.strain,
            rank_deficient: t.rank_deficient,
            negative_eigenvalues: t.negative_eigenvalues.clone(),
        }
    }
}

pub fn parse_trajectory(csv_text: &str, sidecar: TrajectorySidecar) -> Result<Trajectory> {
    let mut r = reader(csv_text);
    let c = r.headers()?.len().saturating_sub(1);
    if c != sidecar.dim {
        return Err(Error::Parse(format!(
            "trajectory has {c} columns, sidecar says {}",
            sidecar.dim
        )));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != c + 1 {
            return Err(Error::Parse(format!(
                "trajectory row has {} fields, expected {}",
                rec.len(),
                c + 1
            )));
        }
        for v in rec.iter().skip(1) {
            values.push(parse_f64(v, "trajectory coordinate")?);
        }
        rows += 1;
    }
    if rows != sidecar.horizon {
        return Err(Error::Parse(format!(
            "trajectory has {rows} rows, sidecar says {}",
            sidecar.horizon
        )));
    }
    Ok(Trajectory {
        coords: DMatrix::from_row_slice(rows, c, &values),
        metric: sidecar.metric,
        eigenvalues: sidecar.eigenvalues,
        spectrum: sidecar.spectrum,
        strain: sidecar.strain,
        rank_deficient: sidecar.rank_deficient,
        negative_eigenvalues: sidecar.negative_eigenvalues,
    })
}

pub fn trajectory_file_stem(metric: Option<Metric>) -> String {
    match metric {
        Some(m) => format!("trajectory_{m}"),
        None => "trajectory".to_string(),
    }
}

/// Full attribution table: `index,node,value`.
pub fn attribution_csv(table: &AttributionTable) -> Result<String> {
    let mut w = writer();
    w.write_record(["index", "node", "value"])?;
    for (i, v) in table.values.iter().enumerate() {
        let node = table
            .node_ids
            .get(i)
            .cloned()
            .unwrap_or_else(|| i.to_string());
        w.write_record([i.to_string(), node, v.to_string()])?;
    }
    finish(w)
}

/// Several tables in one file: `t,s,index,node,value` with 1-based times.
pub fn attribution_tidy_csv(tables: &[AttributionTable]) -> Result<String> {
    let mut w = writer();
    w.write_record(["t", "s", "index", "node", "value"])?;
    for table in tables {
        let (t, s) = (table.pair.0 + 1, table.pair.1 + 1);
        for (i, v) in table.values.iter().enumerate() {
            let node = table
                .node_ids
                .get(i)
                .cloned()
                .unwrap_or_else(|| i.to_string());
            w.write_record([
                t.to_string(),
                s.to_string(),
                i.to_string(),
                node,
                v.to_string(),
            ])?;
        }
    }
    finish(w)
}

/// Tidy score dump: `mode,order,t,score`.
pub fn scores_csv(scores: &[ScoreSeries]) -> Result<String> {
    let mut w = writer();
    w.write_record(["mode", "order", "t", "score"])?;
    for s in scores {
        for stream in s.streams() {
            for (t, v) in stream.scores.iter().enumerate() {
                w.write_record([
                    (s.mode + 1).to_string(),
                    stream.order.to_string(),
                    (t + 1).to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::cmds_distances;

    fn series() -> EmbeddingSeries {
        let b0 = DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 1.0 / 3.0, 4.0, 1e-300, -7.5]);
        let b1 = b0.map(|v| v * 2.0 + 0.25);
        EmbeddingSeries::new(vec![b0, b1], Flavor::Modified).unwrap()
    }

    fn ids() -> Vec<String> {
        vec!["a".into(), "b,c".into(), "d".into()]
    }

    #[test]
    fn embedding_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let y = series();
        let paths = write_embedding_csvs(dir.path(), &y, &ids()).unwrap();
        assert!(paths[1].ends_with("embedding_t002.csv"));
        let first = fs::read_to_string(&paths[0]).unwrap();
        assert!(first.starts_with("node,dim_1,dim_2\n"));
        let (back_ids, back) = read_embedding_csvs(dir.path(), 2, Flavor::Modified).unwrap();
        assert_eq!(back_ids, ids());
        assert_eq!(back, y);
    }

    #[test]
    fn binary_round_trip_and_checksum() {
        let y = series();
        let bytes = encode_embedding(&y).unwrap();
        assert_eq!(&bytes[..8], EMBEDDING_MAGIC);
        let (header, back) = decode_embedding(&bytes).unwrap();
        assert_eq!((header.n, header.dim, header.horizon), (3, 2, 2));
        assert_eq!(back, y);
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 1;
        assert!(decode_embedding(&bad).is_err());
        assert!(decode_embedding(&bytes[..20]).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn distance_and_trajectory_round_trip() {
        let d = DistanceMatrix::new(
            Metric::Mode(1),
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]),
        )
        .unwrap();
        let text = distance_csv(&d).unwrap();
        assert!(text.starts_with("mode-2,1,2,3\n"));
        let back = parse_distance_csv(&text).unwrap();
        assert_eq!(back.metric(), Metric::Mode(1));
        assert_eq!(back.distances(), d.distances());
        assert!(spectrum_csv(&d)
            .unwrap()
            .starts_with("k,mode-2_eigenvalue\n"));

        let traj = cmds_distances(&d, 2).unwrap();
        let sidecar = TrajectorySidecar::from(&traj);
        let json = serde_json::to_string(&sidecar).unwrap();
        let back = parse_trajectory(
            &trajectory_csv(&traj).unwrap(),
            serde_json::from_str(&json).unwrap(),
        )
        .unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn malformed_distance_csv_is_rejected() {
        assert!(parse_distance_csv("tv,1,2\n1,0,1\n").is_err());
        assert!(parse_distance_csv("xx,1\n1,0\n").is_err());
    }
}
