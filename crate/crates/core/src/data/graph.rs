//! Bipartite playlist-track interaction graph with dense integer ids.
//!
//! External files carry arbitrary string ids; ingestion assigns dense ids
//! 0..n-1 per entity class and keeps the string ids in side maps. Dense ids
//! are assigned in a canonical sweep (playlists in first-seen row order,
//! tracks and artists in (playlist, position) order), so loading a file the
//! writer produced reproduces the exact same ids.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense playlist id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct PlaylistId(pub u32);

/// Dense track id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct TrackId(pub u32);

/// Dense artist id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize)]
pub struct ArtistId(pub u32);

impl PlaylistId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
impl TrackId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}
impl ArtistId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PlaylistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl fmt::Display for ArtistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const INTERACTIONS_HEADER: &str = "playlist_id,track_id,artist_id,position";

/// One playlist's ordered track memberships.
#[derive(Clone, Debug, PartialEq, Eq)]
struct PlaylistRow {
    tracks: Vec<TrackId>,
    positions: Vec<u32>,
}

/// Immutable bipartite interaction graph.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    playlist_names: Vec<String>,
    track_names: Vec<String>,
    artist_names: Vec<String>,
    track_name_index: HashMap<String, u32>,
    playlist_name_index: HashMap<String, u32>,
    playlists: Vec<PlaylistRow>,
    track_playlists: Vec<Vec<PlaylistId>>,
    track_artist: Vec<ArtistId>,
}

/// Summary counts for reporting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub playlists: usize,
    pub tracks: usize,
    pub artists: usize,
    pub interactions: usize,
    pub min_playlist_len: usize,
    pub max_playlist_len: usize,
    pub mean_playlist_len: f64,
}

impl InteractionGraph {
    pub fn n_playlists(&self) -> usize {
        self.playlists.len()
    }

    pub fn n_tracks(&self) -> usize {
        self.track_artist.len()
    }

    pub fn n_artists(&self) -> usize {
        self.artist_names.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.playlists.iter().map(|p| p.tracks.len()).sum()
    }

    /// Tracks of a playlist ordered by position.
    pub fn playlist_tracks(&self, p: PlaylistId) -> &[TrackId] {
        &self.playlists[p.index()].tracks
    }

    /// Raw position values parallel to `playlist_tracks`.
    pub fn playlist_positions(&self, p: PlaylistId) -> &[u32] {
        &self.playlists[p.index()].positions
    }

    /// Playlists containing a track, ascending by id.
    pub fn track_playlists(&self, t: TrackId) -> &[PlaylistId] {
        &self.track_playlists[t.index()]
    }

    pub fn artist_of(&self, t: TrackId) -> ArtistId {
        self.track_artist[t.index()]
    }

    pub fn playlist_name(&self, p: PlaylistId) -> &str {
        &self.playlist_names[p.index()]
    }

    pub fn track_name(&self, t: TrackId) -> &str {
        &self.track_names[t.index()]
    }

    pub fn artist_name(&self, a: ArtistId) -> &str {
        &self.artist_names[a.index()]
    }

    pub fn track_by_name(&self, name: &str) -> Option<TrackId> {
        self.track_name_index.get(name).map(|&i| TrackId(i))
    }

    pub fn playlist_by_name(&self, name: &str) -> Option<PlaylistId> {
        self.playlist_name_index.get(name).map(|&i| PlaylistId(i))
    }

    pub fn playlist_ids(&self) -> impl Iterator<Item = PlaylistId> {
        (0..self.playlists.len() as u32).map(PlaylistId)
    }

    pub fn track_ids(&self) -> impl Iterator<Item = TrackId> {
        (0..self.track_artist.len() as u32).map(TrackId)
    }

    pub fn stats(&self) -> GraphStats {
        let lens: Vec<usize> = self.playlists.iter().map(|p| p.tracks.len()).collect();
        let interactions: usize = lens.iter().sum();
        GraphStats {
            playlists: self.n_playlists(),
            tracks: self.n_tracks(),
            artists: self.n_artists(),
            interactions,
            min_playlist_len: lens.iter().copied().min().unwrap_or(0),
            max_playlist_len: lens.iter().copied().max().unwrap_or(0),
            mean_playlist_len: if lens.is_empty() {
                0.0
            } else {
                interactions as f64 / lens.len() as f64
            },
        }
    }

    /// Load from CSV with header `playlist_id,track_id,artist_id,position`.
    pub fn load_interactions(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));

        {
            let headers = reader
                .headers()
                .map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let joined = headers.iter().collect::<Vec<_>>().join(",");
            if joined != INTERACTIONS_HEADER {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("expected header `{INTERACTIONS_HEADER}`, found `{joined}`"),
                });
            }
        }

        let mut builder = GraphBuilder::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::io(format!("read {}", path.display()), e.into()))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != 4 {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected 4 fields, found {}", record.len()),
                });
            }
            let position: u32 = record[3].parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("position `{}` is not a non-negative integer", &record[3]),
            })?;
            builder
                .add(&record[0], &record[1], &record[2], position)
                .map_err(|message| Error::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message,
                })?;
        }
        builder.finish().map_err(Error::Invalid)
    }

    /// Write CSV that `load_interactions` reproduces verbatim (same dense ids).
    pub fn write_interactions(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(INTERACTIONS_HEADER);
        out.push('\n');
        for p in self.playlist_ids() {
            let row = &self.playlists[p.index()];
            for (t, pos) in row.tracks.iter().zip(&row.positions) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    self.playlist_name(p),
                    self.track_name(*t),
                    self.artist_name(self.artist_of(*t)),
                    pos
                ));
            }
        }
        crate::output::atomic_write(path, out.as_bytes())
    }

    /// Append a brand-new track (one not present in any playlist yet).
    /// Used by the counterfactual experiment; keeps existing ids stable.
    pub fn add_track(&mut self, name: String, artist: ArtistId) -> Result<TrackId> {
        if artist.index() >= self.artist_names.len() {
            return Err(Error::invalid(format!("unknown artist id {artist}")));
        }
        if self.track_name_index.contains_key(&name) {
            return Err(Error::invalid(format!("track name `{name}` already exists")));
        }
        let id = TrackId(self.track_names.len() as u32);
        self.track_name_index.insert(name.clone(), id.0);
        self.track_names.push(name);
        self.track_artist.push(artist);
        self.track_playlists.push(Vec::new());
        Ok(id)
    }

    /// Append one edge at the end of a playlist (position = last + 1).
    pub fn append_edge(&mut self, p: PlaylistId, t: TrackId) -> Result<()> {
        if p.index() >= self.playlists.len() {
            return Err(Error::invalid(format!("unknown playlist id {p}")));
        }
        if t.index() >= self.track_artist.len() {
            return Err(Error::invalid(format!("unknown track id {t}")));
        }
        let row = &mut self.playlists[p.index()];
        if row.tracks.contains(&t) {
            return Err(Error::invalid(format!(
                "track {t} already present in playlist {p}"
            )));
        }
        let pos = row.positions.last().map_or(0, |last| last + 1);
        row.tracks.push(t);
        row.positions.push(pos);
        let tp = &mut self.track_playlists[t.index()];
        let at = tp.partition_point(|&q| q < p);
        tp.insert(at, p);
        Ok(())
    }
}

/// Incremental construction from (playlist, track, artist, position) rows.
pub struct GraphBuilder {
    // Interim state keyed by string id; dense ids are assigned in finish().
    playlist_order: Vec<String>,
    playlist_rows: HashMap<String, Vec<(u32, String, String)>>,
    seen_edges: HashMap<(String, String), ()>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            playlist_order: Vec::new(),
            playlist_rows: HashMap::new(),
            seen_edges: HashMap::new(),
        }
    }

    /// Add one interaction row. Errors are returned as plain messages so the
    /// caller can attach file/line context.
    pub fn add(
        &mut self,
        playlist: &str,
        track: &str,
        artist: &str,
        position: u32,
    ) -> std::result::Result<(), String> {
        if playlist.is_empty() || track.is_empty() || artist.is_empty() {
            return Err("empty id field".into());
        }
        let edge = (playlist.to_string(), track.to_string());
        if self.seen_edges.contains_key(&edge) {
            return Err(format!(
                "duplicate edge: playlist `{playlist}` already contains track `{track}`"
            ));
        }
        self.seen_edges.insert(edge, ());
        if !self.playlist_rows.contains_key(playlist) {
            self.playlist_order.push(playlist.to_string());
            self.playlist_rows.insert(playlist.to_string(), Vec::new());
        }
        self.playlist_rows
            .get_mut(playlist)
            .unwrap()
            .push((position, track.to_string(), artist.to_string()));
        Ok(())
    }

    /// Validate and assign dense ids. Playlists keep first-seen order; track
    /// and artist ids follow the (playlist, position) sweep so a rewritten
    /// file round-trips to identical ids.
    pub fn finish(self) -> std::result::Result<InteractionGraph, String> {
        let mut track_index: HashMap<String, u32> = HashMap::new();
        let mut artist_index: HashMap<String, u32> = HashMap::new();
        let mut track_names = Vec::new();
        let mut artist_names = Vec::new();
        let mut track_artist: Vec<ArtistId> = Vec::new();
        let mut playlists = Vec::with_capacity(self.playlist_order.len());
        let mut playlist_name_index = HashMap::new();

        for (pi, pname) in self.playlist_order.iter().enumerate() {
            playlist_name_index.insert(pname.clone(), pi as u32);
            let mut rows = self.playlist_rows[pname].clone();
            rows.sort_by_key(|(pos, _, _)| *pos);
            for w in rows.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(format!(
                        "playlist `{pname}` has duplicate position {}",
                        w[0].0
                    ));
                }
            }
            let mut tracks = Vec::with_capacity(rows.len());
            let mut positions = Vec::with_capacity(rows.len());
            for (pos, tname, aname) in rows {
                let aid = *artist_index.entry(aname.clone()).or_insert_with(|| {
                    artist_names.push(aname.clone());
                    (artist_names.len() - 1) as u32
                });
                let tid = match track_index.get(&tname) {
                    Some(&tid) => {
                        if track_artist[tid as usize] != ArtistId(aid) {
                            return Err(format!(
                                "track `{tname}` has conflicting artists `{}` and `{aname}`",
                                artist_names[track_artist[tid as usize].index()]
                            ));
                        }
                        tid
                    }
                    None => {
                        let tid = track_names.len() as u32;
                        track_index.insert(tname.clone(), tid);
                        track_names.push(tname.clone());
                        track_artist.push(ArtistId(aid));
                        tid
                    }
                };
                tracks.push(TrackId(tid));
                positions.push(pos);
            }
            playlists.push(PlaylistRow { tracks, positions });
        }

        let mut track_playlists = vec![Vec::new(); track_names.len()];
        for (pi, row) in playlists.iter().enumerate() {
            for t in &row.tracks {
                track_playlists[t.index()].push(PlaylistId(pi as u32));
            }
        }
        for tp in &mut track_playlists {
            tp.sort();
        }

        Ok(InteractionGraph {
            playlist_names: self.playlist_order,
            track_names,
            artist_names,
            track_name_index: track_index,
            playlist_name_index,
            playlists,
            track_playlists,
            track_artist,
        })
    }
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}
