//! Flat-file stores in a workspace directory. Every store is rewritten
//! atomically (temporary file + rename) except the append-only event log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};

use crate::detect::DetectionEvent;
use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::geohash::GeohashSequence;
use crate::mining::PatternSet;
use crate::preprocess::{Block, StayPoint};
use crate::region::GeofencedRegion;
use crate::synth::Corpus;

/// Default corpus name: `corpus.csv` plus the `corpus.labels.csv` sidecar.
pub const CORPUS: &str = "corpus";
pub const BLOCKS: &str = "blocks.txt";
pub const REGIONS: &str = "regions.txt";
pub const HISTORY: &str = "history.txt";
pub const PATTERNS: &str = "patterns.txt";
pub const EVENTS: &str = "events.log";

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Workspace { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn write_atomic(&self, name: &str, contents: &str) -> Result<()> {
        let tmp = self.path(&format!(".{name}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(name))?;
        Ok(())
    }

    pub fn read(&self, name: &str) -> Result<String> {
        fs::read_to_string(self.path(name)).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::MissingStore(name.to_string()),
            _ => Error::from(e),
        })
    }

    fn reader(&self, name: &str) -> Result<BufReader<File>> {
        File::open(self.path(name)).map(BufReader::new).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::MissingStore(name.to_string()),
            _ => Error::from(e),
        })
    }

    /// Writes `<name>.csv` (point stream) and `<name>.labels.csv`.
    pub fn save_corpus(&self, name: &str, corpus: &Corpus) -> Result<()> {
        let mut points = Vec::new();
        corpus.write_points(&mut points)?;
        let mut labels = Vec::new();
        corpus.write_labels(&mut labels)?;
        self.write_atomic(&format!("{name}.csv"), &String::from_utf8(points).expect("utf-8"))?;
        self.write_atomic(&format!("{name}.labels.csv"), &String::from_utf8(labels).expect("utf-8"))
    }

    pub fn load_corpus(&self, name: &str) -> Result<Corpus> {
        Corpus::read(self.reader(&format!("{name}.csv"))?, self.reader(&format!("{name}.labels.csv"))?)
    }

    pub fn save_blocks(&self, blocks: &[Block]) -> Result<()> {
        self.write_atomic(BLOCKS, &format_blocks(blocks))
    }

    pub fn load_blocks(&self) -> Result<Vec<Block>> {
        parse_blocks(&self.read(BLOCKS)?)
    }

    pub fn save_regions(&self, regions: &[GeofencedRegion], buffer_m: f64) -> Result<()> {
        let mut s = format!("# buffer_m={buffer_m}\n");
        for r in regions {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        self.write_atomic(REGIONS, &s)
    }

    pub fn load_regions(&self) -> Result<Vec<GeofencedRegion>> {
        let text = self.read(REGIONS)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let buffer_m: f64 = header
            .strip_prefix("# buffer_m=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad region header {header:?}") })?;
        lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                GeofencedRegion::from_line(l, buffer_m).map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })
            })
            .collect()
    }

    pub fn save_history(&self, history: &[GeohashSequence]) -> Result<()> {
        let mut s = String::new();
        for h in history {
            s.push_str(&h.to_line());
            s.push('\n');
        }
        self.write_atomic(HISTORY, &s)
    }

    pub fn load_history(&self) -> Result<Vec<GeohashSequence>> {
        self.read(HISTORY)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| GeohashSequence::from_line(l).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() }))
            .collect()
    }

    pub fn save_patterns(&self, set: &PatternSet) -> Result<()> {
        let mut buf = Vec::new();
        set.write_to(&mut buf)?;
        self.write_atomic(PATTERNS, &String::from_utf8(buf).expect("utf-8"))
    }

    pub fn load_patterns(&self) -> Result<PatternSet> {
        PatternSet::read_from(self.reader(PATTERNS)?)
    }

    pub fn append_events(&self, events: &[DetectionEvent]) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(EVENTS))?;
        let mut s = String::new();
        for e in events {
            s.push_str(&e.to_line());
            s.push('\n');
        }
        f.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn load_events(&self) -> Result<Vec<DetectionEvent>> {
        let mut out = Vec::new();
        for (i, line) in self.reader(EVENTS)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(DetectionEvent::from_line(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?);
        }
        Ok(out)
    }
}

/// Label sidecar of a point-stream file: `dir/name.csv` → `dir/name.labels.csv`.
pub fn labels_path(stream: &Path) -> PathBuf {
    let stem = stream.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stream.with_file_name(format!("{stem}.labels.csv"))
}

/// `block,person_id,timestamp,lat,lon,weight`, one stay point per line.
pub fn format_blocks(blocks: &[Block]) -> String {
    let mut s = String::new();
    for (i, b) in blocks.iter().enumerate() {
        for sp in &b.points {
            let p = &sp.point;
            s.push_str(&format!("{},{},{},{},{},{}\n", i, b.person_id, p.timestamp, p.lat, p.lon, sp.weight));
        }
    }
    s
}

pub fn parse_blocks(text: &str) -> Result<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut current: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields"));
        }
        let idx: usize = f[0].parse().map_err(|_| err("bad block index"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
        let point = GeoPoint::new(num(f[3])?, num(f[4])?, num(f[2])?)?;
        let sp = StayPoint { point, weight: num(f[5])? };
        if current != Some(idx) {
            let mut b = Block::new(f[1]);
            b.open = false;
            blocks.push(b);
            current = Some(idx);
        }
        blocks.last_mut().expect("block pushed").points.push(sp);
    }
    Ok(blocks)
}
