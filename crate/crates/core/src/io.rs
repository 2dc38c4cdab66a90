//! CSV ingestion and export of cluster datasets.
//!
//! One row per individual. Column roles are declared by a [`ColumnSchema`];
//! rows of a cluster need not be contiguous, clusters keep the order of
//! their first row and individuals keep file order within a cluster.
//! Data rows are numbered from 1 (the header is row 0).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::{ClusterDataset, ClusterRecord, DKind, Individual};
use crate::error::{Error, Result};

/// Declared roles of CSV columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSchema {
    pub cluster_id: String,
    pub treatment: String,
    pub v: Vec<String>,
    pub x: Vec<String>,
    pub d: String,
    pub m: String,
    pub y: String,
    pub d_kind: DKind,
}

impl ColumnSchema {
    /// Conventional names `cluster_id, A, V_1..V_q, X_1..X_p, D, M, Y`.
    pub fn standard(p: usize, q: usize, d_kind: DKind) -> Self {
        ColumnSchema {
            cluster_id: "cluster_id".to_string(),
            treatment: "A".to_string(),
            v: (1..=q).map(|i| format!("V_{i}")).collect(),
            x: (1..=p).map(|i| format!("X_{i}")).collect(),
            d: "D".to_string(),
            m: "M".to_string(),
            y: "Y".to_string(),
            d_kind,
        }
    }

    /// Standard schema whose `V_i` and `X_i` columns are read off a header,
    /// numbered consecutively from 1.
    pub fn infer(header: &[&str], d_kind: DKind) -> Result<Self> {
        let count = |prefix: &str| -> Result<usize> {
            let mut idx: Vec<usize> = header
                .iter()
                .filter_map(|h| h.strip_prefix(prefix).and_then(|s| s.parse().ok()))
                .collect();
            idx.sort_unstable();
            if idx.iter().enumerate().any(|(i, &k)| k != i + 1) {
                return Err(Error::Csv {
                    location: "header".to_string(),
                    message: format!("{prefix}i columns must be numbered 1, 2, ... without gaps or repeats"),
                });
            }
            Ok(idx.len())
        };
        Ok(Self::standard(count("X_")?, count("V_")?, d_kind))
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    pub fn q(&self) -> usize {
        self.v.len()
    }

    /// Header in canonical column order.
    pub fn header(&self) -> Vec<&str> {
        let mut h = vec![self.cluster_id.as_str(), self.treatment.as_str()];
        h.extend(self.v.iter().map(String::as_str));
        h.extend(self.x.iter().map(String::as_str));
        h.extend([self.d.as_str(), self.m.as_str(), self.y.as_str()]);
        h
    }

    fn validate(&self) -> Result<()> {
        let h = self.header();
        for (i, a) in h.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::InvalidConfig("schema has an empty column name".to_string()));
            }
            if h[..i].contains(a) {
                return Err(Error::InvalidConfig(format!("column {a} is assigned two roles")));
            }
        }
        Ok(())
    }
}

fn csv_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Csv {
        location: location.into(),
        message: message.into(),
    }
}

/// Column positions of every role, in [`ColumnSchema::header`] order.
fn locate(schema: &ColumnSchema, header: &csv::StringRecord) -> Result<Vec<usize>> {
    schema
        .header()
        .into_iter()
        .map(|name| {
            let hits: Vec<usize> = header.iter().enumerate().filter(|(_, h)| *h == name).map(|(i, _)| i).collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                [] => Err(csv_err("header", format!("missing column {name}"))),
                _ => Err(csv_err("header", format!("column {name} appears more than once"))),
            }
        })
        .collect()
}

/// Parses a dataset from any reader.
pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<ClusterDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err("header", e.to_string()))?.clone();
    let cols = locate(schema, &header)?;
    let names = schema.header();
    let (p, q) = (schema.p(), schema.q());
    let mut clusters: Vec<ClusterRecord> = Vec::new();
    // Row at which each cluster's A and V were first seen.
    let mut first_row: Vec<usize> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_err(format!("row {row}"), e.to_string()))?;
        let num = |role: usize| -> Result<f64> {
            let cell = rec.get(cols[role]).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_err(format!("row {row}, column {}", names[role]), format!("non-numeric cell {cell:?}")))
        };
        let id = rec.get(cols[0]).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(csv_err(format!("row {row}, column {}", names[0]), "empty cluster id"));
        }
        let a = num(1)?;
        if a != 0.0 && a != 1.0 {
            return Err(csv_err(format!("row {row}, column {}", names[1]), format!("treatment must be 0 or 1, got {a}")));
        }
        let v = (0..q).map(|c| num(2 + c)).collect::<Result<Vec<_>>>()?;
        let x = (0..p).map(|c| num(2 + q + c)).collect::<Result<Vec<_>>>()?;
        let ind = Individual {
            x,
            d: num(2 + q + p)?,
            m: num(3 + q + p)?,
            y: num(4 + q + p)?,
        };
        if schema.d_kind == DKind::Binary && ind.d != 0.0 && ind.d != 1.0 {
            return Err(csv_err(
                format!("row {row}, column {}", names[2 + q + p]),
                format!("binary D must be 0 or 1, got {}", ind.d),
            ));
        }
        let treated = a == 1.0;
        match index.get(&id) {
            Some(&c) => {
                let cl = &mut clusters[c];
                if cl.treated != treated {
                    return Err(csv_err(
                        format!("row {row}, column {}", names[1]),
                        format!("cluster {id} has treatment {} at row {}", cl.arm(), first_row[c]),
                    ));
                }
                if let Some(k) = (0..q).find(|&k| cl.v[k] != v[k]) {
                    return Err(csv_err(
                        format!("row {row}, column {}", names[2 + k]),
                        format!("cluster {id} has {} = {} at row {}", names[2 + k], cl.v[k], first_row[c]),
                    ));
                }
                cl.individuals.push(ind);
            }
            None => {
                index.insert(id.clone(), clusters.len());
                first_row.push(row);
                clusters.push(ClusterRecord {
                    id,
                    treated,
                    v,
                    individuals: vec![ind],
                });
            }
        }
    }
    if clusters.is_empty() {
        return Err(csv_err("row 1", "no data rows"));
    }
    ClusterDataset::new(p, q, schema.d_kind, clusters)
}

/// Reads a dataset file; see [`read_csv`].
pub fn ingest_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<ClusterDataset> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(std::io::BufReader::new(f), schema)
}

/// Writes one row per individual in cluster order, with shortest
/// round-trip decimals so that [`read_csv`] restores the same values.
pub fn write_csv<W: Write>(dataset: &ClusterDataset, schema: &ColumnSchema, w: W) -> Result<()> {
    if schema.p() != dataset.p() || schema.q() != dataset.q() {
        return Err(Error::Mismatch(format!(
            "schema has p = {}, q = {} but dataset has p = {}, q = {}",
            schema.p(),
            schema.q(),
            dataset.p(),
            dataset.q()
        )));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    wtr.write_record(schema.header()).map_err(io)?;
    for c in dataset.clusters() {
        for ind in &c.individuals {
            let mut rec = vec![c.id.clone(), format!("{}", c.arm())];
            rec.extend(c.v.iter().map(|v| format!("{v}")));
            rec.extend(ind.x.iter().map(|v| format!("{v}")));
            rec.extend([format!("{}", ind.d), format!("{}", ind.m), format!("{}", ind.y)]);
            wtr.write_record(&rec).map_err(io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> ColumnSchema {
        ColumnSchema::standard(1, 1, DKind::Continuous)
    }

    const TWO: &str = "cluster_id,A,V_1,X_1,D,M,Y\n\
                       a,1,0.5,1.0,2.0,3.0,4.0\n\
                       b,0,-1,0.1,0.2,0.3,0.4\n\
                       a,1,0.5,-1.0,-2.0,-3.0,-4.0\n";

    #[test]
    fn groups_by_first_appearance() {
        let ds = read_csv(TWO.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.n_clusters(), 2);
        assert_eq!(ds.clusters()[0].id, "a");
        assert_eq!(ds.clusters()[0].size(), 2);
        assert_eq!(ds.clusters()[0].individuals[1].y, -4.0);
        assert!(!ds.clusters()[1].treated);
    }

    #[test]
    fn write_then_read_is_identity() {
        let ds = read_csv(TWO.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &schema(), &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice(), &schema()).unwrap(), ds);
    }

    fn location(text: &str, s: &ColumnSchema) -> String {
        match read_csv(text.as_bytes(), s) {
            Err(Error::Csv { location, .. }) => location,
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_coordinates() {
        assert_eq!(location("cluster_id,A,V_1,X_1,D,M\n", &schema()), "header");
        assert_eq!(location("cluster_id,A,V_1,X_1,D,M,Y\na,1,0,x,0,0,0\n", &schema()), "row 1, column X_1");
        assert_eq!(
            location("cluster_id,A,V_1,X_1,D,M,Y\na,1,0,0,0,0,0\na,1,2,0,0,0,0\n", &schema()),
            "row 2, column V_1"
        );
        assert_eq!(location("cluster_id,A,V_1,X_1,D,M,Y\n,1,0,0,0,0,0\n", &schema()), "row 1, column cluster_id");
        assert_eq!(location("cluster_id,A,V_1,X_1,D,M,Y\n", &schema()), "row 1");
        let bin = ColumnSchema::standard(1, 1, DKind::Binary);
        assert_eq!(location("cluster_id,A,V_1,X_1,D,M,Y\na,1,0,0,0.5,0,0\n", &bin), "row 1, column D");
    }

    #[test]
    fn infers_covariate_columns() {
        let s = ColumnSchema::infer(&["Y", "X_2", "cluster_id", "X_1", "A", "D", "M"], DKind::Continuous).unwrap();
        assert_eq!((s.p(), s.q()), (2, 0));
        assert!(ColumnSchema::infer(&["X_1", "X_3"], DKind::Continuous).is_err());
    }
}
