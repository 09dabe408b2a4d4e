//! Binary PGM (P5, maxval 255) with a one-line geometry sidecar.
//!
//! Row 0 of the grid is written first. The sidecar lives next to the image
//! at `<file>.txt` and holds `resolution=<m> origin_x=<m> origin_y=<m>`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{CellState, GridGeometry, OccupancyGrid, ScoreMap, WorldPoint};
use crate::{Error, Result};

pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(data);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|m| Error::MapFormat(format!("{}: {m}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported magic {:?}", fields[0]));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(format!("raster truncated: need {need} bytes"));
    }
    Ok((w, h, bytes[pos..pos + need].to_vec()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, geom: &GridGeometry) -> Result<()> {
    let side = sidecar_path(path);
    let text = format!(
        "resolution={} origin_x={} origin_y={}\n",
        geom.resolution, geom.origin.x, geom.origin.y
    );
    fs::write(&side, text).map_err(|e| Error::io(side, e))
}

fn read_sidecar(path: &Path, width: usize, height: usize) -> Result<GridGeometry> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let (mut res, mut ox, mut oy) = (None, None, None);
    for tok in text.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::MapFormat(format!("{}: bad token {tok:?}", side.display())))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::MapFormat(format!("{}: bad number {v:?}", side.display())))?;
        match k {
            "resolution" => res = Some(v),
            "origin_x" => ox = Some(v),
            "origin_y" => oy = Some(v),
            _ => return Err(Error::MapFormat(format!("{}: unknown key {k:?}", side.display()))),
        }
    }
    match (res, ox, oy) {
        (Some(r), Some(x), Some(y)) => GridGeometry::new(width, height, r, WorldPoint::new(x, y)),
        _ => Err(Error::MapFormat(format!("{}: missing keys", side.display()))),
    }
}

impl ScoreMap {
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let g = self.geometry();
        write_pgm(path, g.width, g.height, self.scores())?;
        write_sidecar(path, g)
    }

    pub fn load_pgm(path: &Path) -> Result<ScoreMap> {
        let (w, h, data) = read_pgm(path)?;
        let geom = read_sidecar(path, w, h)?;
        ScoreMap::from_scores(geom, data)
    }
}

impl OccupancyGrid {
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let g = self.geometry();
        let levels: Vec<u8> = self.cells().iter().map(|s| s.to_level()).collect();
        write_pgm(path, g.width, g.height, &levels)?;
        write_sidecar(path, g)
    }

    pub fn load_pgm(path: &Path) -> Result<OccupancyGrid> {
        let (w, h, data) = read_pgm(path)?;
        let geom = read_sidecar(path, w, h)?;
        let cells = data
            .iter()
            .map(|&l| {
                CellState::from_level(l).ok_or_else(|| {
                    Error::MapFormat(format!("{}: level {l} is not 0/128/255", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        OccupancyGrid::from_cells(geom, cells)
    }
}
