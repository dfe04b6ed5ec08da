//! On-disk formats for readings and road graphs.
//!
//! Binary tensor (`.sttf`): magic `STTF`, then little-endian `u32` fields
//! `version, T, N, C, interval_minutes`, then `T * N * C` little-endian
//! `f64` values, timestamp-major.
//!
//! CSV tensor: header `timestamp,sensor,attr0,...`, one row per
//! (timestamp, sensor). Timestamps and sensors keep first-appearance order
//! and every combination must be present exactly once.
//!
//! Edge list CSV: header `from,to[,weight]`, optionally followed by a
//! `#directed` or `#undirected` marker (default undirected).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::TrafficDataset;
use crate::error::{Error, Result};
use crate::series::SpatioTemporalTensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"STTF";
pub const TENSOR_VERSION: u32 = 1;

pub fn write_tensor<W: Write>(x: &SpatioTemporalTensor, mut w: W) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    for v in [
        TENSOR_VERSION,
        to_u32(x.timestamps())?,
        to_u32(x.sensors())?,
        to_u32(x.attributes())?,
        x.interval_minutes(),
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<SpatioTemporalTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format("not a tensor file (bad magic)".into()));
    }
    let mut header = [0u32; 5];
    for h in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b);
    }
    let [version, t, n, c, interval] = header;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let len = t as usize * n as usize * c as usize;
    let mut data = vec![0.0; len];
    let mut b = [0u8; 8];
    for d in data.iter_mut() {
        r.read_exact(&mut b)?;
        *d = f64::from_le_bytes(b);
    }
    SpatioTemporalTensor::new(t as usize, n as usize, c as usize, interval, data)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("{what}: cannot parse {s:?} as a number")))
}

/// Reads a long-format CSV tensor. Returns the tensor and the sensor ids.
pub fn read_tensor_csv<R: Read>(r: R, interval_minutes: u32) -> Result<(SpatioTemporalTensor, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "timestamp" || &headers[1] != "sensor" {
        return Err(Error::Parse(
            "tensor CSV header must be timestamp,sensor,attr0[,attr1...]".into(),
        ));
    }
    let c = headers.len() - 2;
    let mut times: Vec<String> = Vec::new();
    let mut time_idx: HashMap<String, usize> = HashMap::new();
    let mut sensors: Vec<String> = Vec::new();
    let mut sensor_idx: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != c + 2 {
            return Err(Error::Parse(format!("row {}: expected {} fields", line + 2, c + 2)));
        }
        let ti = *time_idx.entry(rec[0].to_string()).or_insert_with(|| {
            times.push(rec[0].to_string());
            times.len() - 1
        });
        let si = *sensor_idx.entry(rec[1].to_string()).or_insert_with(|| {
            sensors.push(rec[1].to_string());
            sensors.len() - 1
        });
        let vals = (0..c)
            .map(|k| parse_f64(&rec[k + 2], &format!("row {}", line + 2)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((ti, si, vals));
    }
    let (t, n) = (times.len(), sensors.len());
    if rows.len() != t * n {
        return Err(Error::dim(format!(
            "{} rows for {t} timestamps x {n} sensors",
            rows.len()
        )));
    }
    let mut data = vec![f64::NAN; t * n * c];
    let mut seen = vec![false; t * n];
    for (ti, si, vals) in rows {
        if std::mem::replace(&mut seen[ti * n + si], true) {
            return Err(Error::Parse(format!(
                "duplicate row for timestamp {} sensor {}",
                times[ti], sensors[si]
            )));
        }
        data[(ti * n + si) * c..(ti * n + si + 1) * c].copy_from_slice(&vals);
    }
    Ok((SpatioTemporalTensor::new(t, n, c, interval_minutes, data)?, sensors))
}

/// Reads an edge list into a dense `N x N` adjacency over `sensor_ids`.
///
/// With `binary` set every listed edge gets weight 1 regardless of the
/// weight column.
pub fn read_edges<R: Read>(r: R, sensor_ids: &[String], binary: bool) -> Result<Vec<f64>> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("edge list is empty".into()))?;
    let (fields, marker) = match header.split_once('#') {
        Some((f, m)) => (f, m.trim()),
        None => (header, "undirected"),
    };
    let directed = match marker {
        "directed" => true,
        "undirected" => false,
        other => return Err(Error::Parse(format!("unknown edge list marker #{other}"))),
    };
    let cols: Vec<&str> = fields.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "from" || cols[1] != "to" {
        return Err(Error::Parse("edge list header must start with from,to".into()));
    }
    let weighted = cols.len() >= 3 && !binary;

    let index: HashMap<&str, usize> = sensor_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let n = sensor_ids.len();
    let mut adj = vec![0.0; n * n];
    for (k, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() < 2 {
            return Err(Error::Parse(format!("edge row {}: too few fields", k + 2)));
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Parse(format!("edge row {}: unknown sensor id {id:?}", k + 2)))
        };
        let (a, b) = (lookup(parts[0])?, lookup(parts[1])?);
        let w = if weighted {
            let w = parse_f64(parts.get(2).copied().unwrap_or("1"), &format!("edge row {}", k + 2))?;
            if !(w >= 0.0) {
                return Err(Error::Domain(format!("edge row {}: negative weight", k + 2)));
            }
            w
        } else {
            1.0
        };
        adj[a * n + b] = w;
        if !directed {
            adj[b * n + a] = w;
        }
    }
    Ok(adj)
}

/// Writes the nonzero entries of `adj` as an edge list. Symmetric matrices
/// are written once per pair with the `#undirected` marker.
pub fn write_edges<W: Write>(adj: &[f64], sensor_ids: &[String], mut w: W) -> Result<()> {
    let n = sensor_ids.len();
    let symmetric = (0..n).all(|i| (0..n).all(|j| adj[i * n + j] == adj[j * n + i]));
    writeln!(
        w,
        "from,to,weight #{}",
        if symmetric { "undirected" } else { "directed" }
    )?;
    for i in 0..n {
        for j in 0..n {
            let v = adj[i * n + j];
            if v != 0.0 && (!symmetric || i <= j) {
                writeln!(w, "{},{},{}", sensor_ids[i], sensor_ids[j], v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads readings (binary `STTF` or CSV, detected by magic) and an edge list.
pub fn load_dataset(
    tensor_path: &Path,
    edges_path: &Path,
    interval_minutes: u32,
    binary_adjacency: bool,
) -> Result<TrafficDataset> {
    let mut head = [0u8; 4];
    let is_binary = {
        let mut f = File::open(tensor_path)?;
        f.read_exact(&mut head).is_ok() && &head == TENSOR_MAGIC
    };
    let (tensor, ids) = if is_binary {
        let x = read_tensor(BufReader::new(File::open(tensor_path)?))?;
        let ids = (0..x.sensors()).map(|i| i.to_string()).collect();
        (x, ids)
    } else {
        read_tensor_csv(BufReader::new(File::open(tensor_path)?), interval_minutes)?
    };
    let adj = read_edges(File::open(edges_path)?, &ids, binary_adjacency)?;
    let name = tensor_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TrafficDataset::new(name, tensor, adj, ids)
}

/// Writes a dataset as `<stem>.sttf` and `<stem>.edges.csv`.
pub fn save_dataset(ds: &TrafficDataset, tensor_path: &Path, edges_path: &Path) -> Result<()> {
    write_tensor(&ds.tensor, BufWriter::new(File::create(tensor_path)?))?;
    write_edges(&ds.adjacency, &ds.sensor_ids, BufWriter::new(File::create(edges_path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_tensor_two_sensors_four_steps() {
        let text = "timestamp,sensor,flow\n0,a,1\n0,b,2\n1,a,3\n1,b,4\n2,a,5\n2,b,6\n3,a,7\n3,b,8\n";
        let (x, ids) = read_tensor_csv(text.as_bytes(), 5).unwrap();
        assert_eq!((x.timestamps(), x.sensors(), x.attributes()), (4, 2, 1));
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(x.get(3, 1, 0), 8.0);
    }

    #[test]
    fn csv_tensor_rejects_gaps_and_nan() {
        let missing = "timestamp,sensor,flow\n0,a,1\n0,b,2\n1,a,3\n";
        assert!(read_tensor_csv(missing.as_bytes(), 5).is_err());
        let nan = "timestamp,sensor,flow\n0,a,NaN\n";
        assert!(matches!(read_tensor_csv(nan.as_bytes(), 5), Err(Error::Domain(_))));
        let dup = "timestamp,sensor,flow\n0,a,1\n0,a,2\n";
        assert!(read_tensor_csv(dup.as_bytes(), 5).is_err());
    }

    #[test]
    fn undirected_edges_are_mirrored() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let adj = read_edges("from,to,cost\na,b,2.5\n".as_bytes(), &ids, false).unwrap();
        assert_eq!(adj[1], 2.5);
        assert_eq!(adj[3], 2.5);
        let bin = read_edges("from,to,cost\na,b,2.5\n".as_bytes(), &ids, true).unwrap();
        assert_eq!(bin[1], 1.0);
        let dir = read_edges("from,to #directed\nb,c\n".as_bytes(), &ids, false).unwrap();
        assert_eq!((dir[5], dir[7]), (1.0, 0.0));
        let err = read_edges("from,to\na,z\n".as_bytes(), &ids, false).unwrap_err();
        assert!(matches!(err, Error::Parse(m) if m.contains("unknown sensor")));
    }

    #[test]
    fn binary_tensor_round_trip() {
        let x = SpatioTemporalTensor::from_fn(5, 3, 2, 5, |t, i, c| (t + i * c) as f64 * 0.5).unwrap();
        let mut buf = Vec::new();
        write_tensor(&x, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"STTF");
        assert_eq!(buf.len(), 4 + 20 + 5 * 3 * 2 * 8);
        assert_eq!(read_tensor(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn edge_round_trip() {
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let adj = super::super::ring_adjacency(4);
        let mut buf = Vec::new();
        write_edges(&adj, &ids, &mut buf).unwrap();
        assert_eq!(read_edges(buf.as_slice(), &ids, false).unwrap(), adj);
    }
}
