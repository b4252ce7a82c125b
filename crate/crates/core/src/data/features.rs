//! Per-track content features.
//!
//! Nine sonic descriptors are stored as discrete integer bins 0..=9; twenty
//! genre tags are 0/1 flags. Optional dense embedding blocks (track-name and
//! album-image vectors) can be attached from separate files. All retrieval
//! and similarity code consumes the sonic bins scaled by 1/9 into [0, 1].

use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::data::graph::{InteractionGraph, TrackId};
use crate::error::{Error, Result};

pub const SONIC_DIM: usize = 9;
pub const GENRE_DIM: usize = 20;
pub const NAME_EMB_DIM: usize = 512;
pub const IMAGE_EMB_DIM: usize = 1024;

/// Sonic bin values live on an integer grid; scaling maps them into [0, 1].
pub const SONIC_SCALE: f64 = 9.0;

/// Content features for the whole catalog, rows indexed by dense TrackId.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFeatureTable {
    sonic: Array2<f64>,
    genre: Array2<f64>,
    name_emb: Option<Array2<f64>>,
    image_emb: Option<Array2<f64>>,
}

impl TrackFeatureTable {
    /// Build from raw per-track rows (sonic bins 0..=9, genre flags 0/1).
    pub fn from_rows(sonic: Vec<[u8; SONIC_DIM]>, genre: Vec<[u8; GENRE_DIM]>) -> Result<Self> {
        if sonic.len() != genre.len() {
            return Err(Error::invalid(format!(
                "sonic rows ({}) and genre rows ({}) disagree",
                sonic.len(),
                genre.len()
            )));
        }
        let n = sonic.len();
        let mut s = Array2::zeros((n, SONIC_DIM));
        let mut g = Array2::zeros((n, GENRE_DIM));
        for (i, row) in sonic.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > 9 {
                    return Err(Error::invalid(format!(
                        "sonic bin {v} out of range 0..=9 for track row {i}"
                    )));
                }
                s[[i, j]] = v as f64;
            }
        }
        for (i, row) in genre.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::invalid(format!(
                        "genre flag {v} out of range 0..=1 for track row {i}"
                    )));
                }
                g[[i, j]] = v as f64;
            }
        }
        Ok(TrackFeatureTable {
            sonic: s,
            genre: g,
            name_emb: None,
            image_emb: None,
        })
    }

    pub fn n_tracks(&self) -> usize {
        self.sonic.nrows()
    }

    pub fn has_name_emb(&self) -> bool {
        self.name_emb.is_some()
    }

    pub fn has_image_emb(&self) -> bool {
        self.image_emb.is_some()
    }

    /// Sonic bins scaled into [0, 1]; the apriori similarity space.
    pub fn scaled_sonic(&self) -> Array2<f64> {
        &self.sonic / SONIC_SCALE
    }

    /// One scaled sonic row.
    pub fn scaled_sonic_row(&self, t: TrackId) -> Array1<f64> {
        self.sonic.row(t.index()).mapv(|v| v / SONIC_SCALE)
    }

    /// Raw integer sonic bins (0..=9) as stored.
    pub fn sonic_bins_row(&self, t: TrackId) -> Vec<u8> {
        self.sonic.row(t.index()).iter().map(|&v| v as u8).collect()
    }

    /// Model input matrix: scaled sonic, genre flags, optional dense blocks.
    pub fn input_matrix(&self, use_name_emb: bool, use_image_emb: bool) -> Result<Array2<f64>> {
        let n = self.n_tracks();
        let mut dim = SONIC_DIM + GENRE_DIM;
        let name = if use_name_emb {
            let block = self.name_emb.as_ref().ok_or_else(|| {
                Error::invalid("name embeddings requested but no name embedding file was loaded")
            })?;
            dim += block.ncols();
            Some(block)
        } else {
            None
        };
        let image = if use_image_emb {
            let block = self.image_emb.as_ref().ok_or_else(|| {
                Error::invalid("image embeddings requested but no image embedding file was loaded")
            })?;
            dim += block.ncols();
            Some(block)
        } else {
            None
        };
        let mut x = Array2::zeros((n, dim));
        for i in 0..n {
            let mut c = 0;
            for j in 0..SONIC_DIM {
                x[[i, c]] = self.sonic[[i, j]] / SONIC_SCALE;
                c += 1;
            }
            for j in 0..GENRE_DIM {
                x[[i, c]] = self.genre[[i, j]];
                c += 1;
            }
            if let Some(block) = name {
                for j in 0..block.ncols() {
                    x[[i, c]] = block[[i, j]];
                    c += 1;
                }
            }
            if let Some(block) = image {
                for j in 0..block.ncols() {
                    x[[i, c]] = block[[i, j]];
                    c += 1;
                }
            }
        }
        Ok(x)
    }

    /// Attach a dense block loaded by `load_dense_block`.
    pub fn set_name_emb(&mut self, block: Array2<f64>) -> Result<()> {
        if block.nrows() != self.n_tracks() {
            return Err(Error::invalid(format!(
                "name embedding rows {} != catalog size {}",
                block.nrows(),
                self.n_tracks()
            )));
        }
        self.name_emb = Some(block);
        Ok(())
    }

    pub fn set_image_emb(&mut self, block: Array2<f64>) -> Result<()> {
        if block.nrows() != self.n_tracks() {
            return Err(Error::invalid(format!(
                "image embedding rows {} != catalog size {}",
                block.nrows(),
                self.n_tracks()
            )));
        }
        self.image_emb = Some(block);
        Ok(())
    }

    /// Load `track_id,sonic_0..sonic_8,genre_0..genre_19` for a known catalog.
    pub fn load_features(path: &Path, graph: &InteractionGraph) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));
        {
            let headers = reader
                .headers()
                .map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let expected = features_header();
            let joined = headers.iter().collect::<Vec<_>>().join(",");
            if joined != expected {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("expected header `{expected}`"),
                });
            }
        }

        let n = graph.n_tracks();
        let mut sonic = Array2::zeros((n, SONIC_DIM));
        let mut genre = Array2::zeros((n, GENRE_DIM));
        let mut seen: HashSet<TrackId> = HashSet::with_capacity(n);
        for record in reader.records() {
            let record = record.map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            };
            if record.len() != 1 + SONIC_DIM + GENRE_DIM {
                return Err(malformed(format!(
                    "expected {} fields, found {}",
                    1 + SONIC_DIM + GENRE_DIM,
                    record.len()
                )));
            }
            let t = graph
                .track_by_name(&record[0])
                .ok_or_else(|| malformed(format!("unknown track id `{}`", &record[0])))?;
            if !seen.insert(t) {
                return Err(malformed(format!("duplicate feature row for `{}`", &record[0])));
            }
            for j in 0..SONIC_DIM {
                let v: u8 = record[1 + j]
                    .parse()
                    .ok()
                    .filter(|&v| v <= 9)
                    .ok_or_else(|| malformed(format!("sonic bin `{}` not in 0..=9", &record[1 + j])))?;
                sonic[[t.index(), j]] = v as f64;
            }
            for j in 0..GENRE_DIM {
                let v: u8 = record[1 + SONIC_DIM + j]
                    .parse()
                    .ok()
                    .filter(|&v| v <= 1)
                    .ok_or_else(|| {
                        malformed(format!("genre flag `{}` not 0/1", &record[1 + SONIC_DIM + j]))
                    })?;
                genre[[t.index(), j]] = v as f64;
            }
        }
        if seen.len() != n {
            let missing = graph
                .track_ids()
                .find(|t| !seen.contains(t))
                .map(|t| graph.track_name(t).to_string())
                .unwrap_or_default();
            return Err(Error::invalid(format!(
                "feature file covers {}/{} tracks (first missing: `{missing}`)",
                seen.len(),
                n
            )));
        }
        Ok(TrackFeatureTable {
            sonic,
            genre,
            name_emb: None,
            image_emb: None,
        })
    }

    /// Write the feature CSV in dense track order.
    pub fn write_features(&self, path: &Path, graph: &InteractionGraph) -> Result<()> {
        let mut out = String::new();
        out.push_str(&features_header());
        out.push('\n');
        for t in graph.track_ids() {
            out.push_str(graph.track_name(t));
            for j in 0..SONIC_DIM {
                out.push_str(&format!(",{}", self.sonic[[t.index(), j]] as u8));
            }
            for j in 0..GENRE_DIM {
                out.push_str(&format!(",{}", self.genre[[t.index(), j]] as u8));
            }
            out.push('\n');
        }
        crate::output::atomic_write(path, out.as_bytes())
    }

    /// Duplicate a feature row in place at the end of the table (used when a
    /// synthetic copy of a track is appended to the catalog).
    pub fn duplicate_row(&mut self, source: TrackId) {
        let s = self.sonic.row(source.index()).to_owned();
        let g = self.genre.row(source.index()).to_owned();
        self.sonic.push_row(s.view()).expect("row shape matches");
        self.genre.push_row(g.view()).expect("row shape matches");
        if let Some(block) = &mut self.name_emb {
            let r = block.row(source.index()).to_owned();
            block.push_row(r.view()).expect("row shape matches");
        }
        if let Some(block) = &mut self.image_emb {
            let r = block.row(source.index()).to_owned();
            block.push_row(r.view()).expect("row shape matches");
        }
    }
}

/// Header for the main feature CSV.
pub fn features_header() -> String {
    let mut h = String::from("track_id");
    for j in 0..SONIC_DIM {
        h.push_str(&format!(",sonic_{j}"));
    }
    for j in 0..GENRE_DIM {
        h.push_str(&format!(",genre_{j}"));
    }
    h
}

/// Load a dense float block `track_id,v0..v{dim-1}` for a known catalog.
pub fn load_dense_block(path: &Path, graph: &InteractionGraph, dim: usize) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let n = graph.n_tracks();
    let mut block = Array2::zeros((n, dim));
    let mut seen: HashSet<TrackId> = HashSet::with_capacity(n);
    // Header is `track_id,v0..` but only the field count is enforced; dense
    // vendors disagree on column names.
    let width = reader
        .headers()
        .map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?
        .len();
    if width != dim + 1 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected {} columns, found {width}", dim + 1),
        });
    }
    for record in reader.records() {
        let record = record.map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != dim + 1 {
            return Err(malformed(format!(
                "expected {} fields, found {}",
                dim + 1,
                record.len()
            )));
        }
        let t = graph
            .track_by_name(&record[0])
            .ok_or_else(|| malformed(format!("unknown track id `{}`", &record[0])))?;
        if !seen.insert(t) {
            return Err(malformed(format!("duplicate row for `{}`", &record[0])));
        }
        for j in 0..dim {
            let v: f64 = record[1 + j]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| malformed(format!("value `{}` is not a finite float", &record[1 + j])))?;
            block[[t.index(), j]] = v;
        }
    }
    if seen.len() != n {
        return Err(Error::invalid(format!(
            "dense block covers {}/{} tracks",
            seen.len(),
            n
        )));
    }
    Ok(block)
}
