//! Binary on-disk format for a fitted [`ClusterModel`].
//!
//! Layout (all integers and floats little-endian, 8 bytes each):
//!
//! ```text
//! magic   8 bytes  "SMCLUST1"
//! u64     format version (currently 1)
//! u64     n_total
//! u64     dim                      (centroid/moment dimension)
//! u64     standardization width
//! u64     number of clusters
//! f64     epsilon
//! u64     flags (bit 0: clustered by class)
//! f64×w   standardization means
//! f64×w   standardization scales
//! u64×w   standardization exempt mask (0/1)
//! per cluster:
//!   u64   seed row
//!   u64   member count
//!   u64   has class label (0/1)
//!   f64   class label (0.0 when absent)
//!   f64×dim              centroid
//!   f64×dim              first moment
//!   f64×dim(dim+1)/2     second moment, lower triangle row-major
//! i64×n_total  row → cluster assignment (−1 = outside clustered stratum)
//! ```
//!
//! Values are written exactly as stored in memory, so a write → read round
//! trip is bit-identical.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Cluster, ClusterModel, Standardization};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SMCLUST1";
const FORMAT_VERSION: u64 = 1;

impl ClusterModel {
    /// Serialize to `path` in the versioned binary format above.
    pub fn write(&self, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let io_err = |e: std::io::Error| Error::io(&display, e);
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);

        w.write_all(MAGIC).map_err(io_err)?;
        w.write_u64::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.n_total as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.dim as u64).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.standardization.width() as u64)
            .map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.clusters.len() as u64)
            .map_err(io_err)?;
        w.write_f64::<LittleEndian>(self.epsilon).map_err(io_err)?;
        w.write_u64::<LittleEndian>(u64::from(self.by_class))
            .map_err(io_err)?;

        for &m in &self.standardization.means {
            w.write_f64::<LittleEndian>(m).map_err(io_err)?;
        }
        for &s in &self.standardization.scales {
            w.write_f64::<LittleEndian>(s).map_err(io_err)?;
        }
        for &e in &self.standardization.exempt {
            w.write_u64::<LittleEndian>(u64::from(e)).map_err(io_err)?;
        }

        for c in &self.clusters {
            w.write_u64::<LittleEndian>(c.seed_row as u64).map_err(io_err)?;
            w.write_u64::<LittleEndian>(c.count as u64).map_err(io_err)?;
            w.write_u64::<LittleEndian>(u64::from(c.label.is_some()))
                .map_err(io_err)?;
            w.write_f64::<LittleEndian>(c.label.unwrap_or(0.0))
                .map_err(io_err)?;
            for &v in c.centroid.iter() {
                w.write_f64::<LittleEndian>(v).map_err(io_err)?;
            }
            for &v in c.first_moment.iter() {
                w.write_f64::<LittleEndian>(v).map_err(io_err)?;
            }
            for i in 0..self.dim {
                for j in 0..=i {
                    w.write_f64::<LittleEndian>(c.second_moment[[i, j]])
                        .map_err(io_err)?;
                }
            }
        }

        for &a in &self.assignment {
            w.write_i64::<LittleEndian>(a).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    /// Read and validate a cluster model written by [`ClusterModel::write`].
    pub fn read(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let invalid = |reason: String| Error::InvalidArtifact {
            path: display.clone(),
            reason,
        };
        let io_err = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::InvalidArtifact {
                path: display.clone(),
                reason: "file is truncated".to_string(),
            },
            _ => Error::io(&display, e),
        };
        let mut r = BufReader::new(std::fs::File::open(path).map_err(io_err)?);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(invalid("bad magic; not a cluster artifact".to_string()));
        }
        let version = r.read_u64::<LittleEndian>().map_err(io_err)?;
        if version != FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let n_total = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let dim = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let std_width = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let n_clusters = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
        let epsilon = r.read_f64::<LittleEndian>().map_err(io_err)?;
        let flags = r.read_u64::<LittleEndian>().map_err(io_err)?;
        if dim == 0 || dim > 1_000_000 || n_clusters > n_total || n_total > (1 << 40) {
            return Err(invalid(format!(
                "implausible header: n_total {n_total}, dim {dim}, clusters {n_clusters}"
            )));
        }

        let mut means = vec![0.0; std_width];
        let mut scales = vec![0.0; std_width];
        let mut exempt = vec![false; std_width];
        for m in means.iter_mut() {
            *m = r.read_f64::<LittleEndian>().map_err(io_err)?;
        }
        for s in scales.iter_mut() {
            *s = r.read_f64::<LittleEndian>().map_err(io_err)?;
        }
        for e in exempt.iter_mut() {
            *e = r.read_u64::<LittleEndian>().map_err(io_err)? != 0;
        }

        let mut clusters = Vec::with_capacity(n_clusters);
        let mut n_clustered = 0usize;
        for _ in 0..n_clusters {
            let seed_row = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let count = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
            let has_label = r.read_u64::<LittleEndian>().map_err(io_err)? != 0;
            let label_val = r.read_f64::<LittleEndian>().map_err(io_err)?;
            let mut centroid = Array1::<f64>::zeros(dim);
            for v in centroid.iter_mut() {
                *v = r.read_f64::<LittleEndian>().map_err(io_err)?;
            }
            let mut first_moment = Array1::<f64>::zeros(dim);
            for v in first_moment.iter_mut() {
                *v = r.read_f64::<LittleEndian>().map_err(io_err)?;
            }
            let mut second_moment = Array2::<f64>::zeros((dim, dim));
            for i in 0..dim {
                for j in 0..=i {
                    let v = r.read_f64::<LittleEndian>().map_err(io_err)?;
                    second_moment[[i, j]] = v;
                    second_moment[[j, i]] = v;
                }
            }
            n_clustered += count;
            clusters.push(Cluster {
                seed_row,
                count,
                centroid,
                first_moment,
                second_moment,
                label: if has_label { Some(label_val) } else { None },
            });
        }

        let mut assignment = vec![0i64; n_total];
        for a in assignment.iter_mut() {
            *a = r.read_i64::<LittleEndian>().map_err(io_err)?;
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => {}
            Ok(_) => return Err(invalid("trailing bytes after assignment".to_string())),
            Err(e) => return Err(io_err(e)),
        }

        let model = ClusterModel {
            epsilon,
            dim,
            n_total,
            n_clustered,
            clusters,
            assignment,
            standardization: Standardization {
                means,
                scales,
                exempt,
            },
            by_class: flags & 1 != 0,
        };
        model.validate().map_err(|e| match e {
            Error::InvalidArtifact { reason, .. } => Error::InvalidArtifact {
                path: display.clone(),
                reason,
            },
            other => other,
        })?;
        Ok(model)
    }
}
