//! Line-delimited JSON scene files.
//!
//! The first line is a header `{"format":"trb-scenes","version":1,"scenes":N}`,
//! followed by exactly `N` lines holding one [`Scene`] each. Positions are in
//! metres, headings in radians, velocities in m/s and `dt` in seconds. Floats
//! are written in shortest round-trip form, so reading a written file yields
//! bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Scene;

pub const SCENE_FORMAT: &str = "trb-scenes";
pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    scenes: usize,
}

pub fn write_scenes_to<W: Write>(scenes: &[Scene], mut w: W) -> Result<()> {
    let header = Header {
        format: SCENE_FORMAT.into(),
        version: SCENE_FORMAT_VERSION,
        scenes: scenes.len(),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for s in scenes {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenes_from<R: BufRead>(r: R) -> Result<Vec<Scene>> {
    let mut lines = r.lines();
    let first = lines.next().ok_or(Error::Malformed {
        line: 1,
        message: "missing header record".into(),
    })??;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Malformed {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != SCENE_FORMAT {
        return Err(Error::Malformed {
            line: 1,
            message: format!("unknown format {:?}", header.format),
        });
    }
    if header.version != SCENE_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: SCENE_FORMAT_VERSION,
            found: header.version,
        });
    }
    let mut scenes = Vec::with_capacity(header.scenes);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let number = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: number,
            message: e.to_string(),
        })?;
        scenes.push(scene);
    }
    if scenes.len() != header.scenes {
        return Err(Error::Malformed {
            line: scenes.len() + 2,
            message: format!("header announces {} scenes, found {}", header.scenes, scenes.len()),
        });
    }
    Ok(scenes)
}

pub fn write_scenes(scenes: &[Scene], path: impl AsRef<Path>) -> Result<()> {
    write_scenes_to(scenes, BufWriter::new(File::create(path)?))
}

pub fn read_scenes(path: impl AsRef<Path>) -> Result<Vec<Scene>> {
    read_scenes_from(BufReader::new(File::open(path)?))
}
