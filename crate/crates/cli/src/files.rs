use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jointflow::image::{FlowField, Image, ImageSequence};
use jointflow::io::{read_flo, read_image, write_flo, write_flow_color, write_image, BitDepth};

const IMAGE_EXTENSIONS: [&str; 2] = ["pgm", "png"];

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Files in `dir` with one of `exts`, sorted by name.
pub fn list_dir(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && has_extension(&path, exts) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Expands directories and glob patterns into an ordered list of frame files.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            out.extend(list_dir(input, &IMAGE_EXTENSIONS)?);
        } else if input.exists() {
            out.push(input.clone());
        } else {
            let pattern = input.to_string_lossy();
            let mut matched: Vec<PathBuf> = glob::glob(&pattern)
                .with_context(|| format!("bad pattern {pattern}"))?
                .collect::<std::result::Result<_, _>>()?;
            if matched.is_empty() {
                bail!("no input matches {pattern}");
            }
            matched.sort();
            out.extend(matched);
        }
    }
    Ok(out)
}

pub fn read_sequence(paths: &[PathBuf]) -> Result<ImageSequence> {
    let frames = paths
        .iter()
        .map(|p| read_image(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<Image>>>()?;
    Ok(ImageSequence::new(frames)?)
}

pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let m = read_image(path).with_context(|| format!("reading mask {}", path.display()))?;
    let (w, h) = m.dims();
    Ok((w, h, m.data().iter().map(|&v| v > 0.5).collect()))
}

pub fn frame_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("frame_{k:03}.pgm"))
}

pub fn flow_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("flow_{k:03}.flo"))
}

pub fn write_frames(dir: &Path, seq: &ImageSequence, depth: BitDepth) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (k, frame) in seq.frames().iter().enumerate() {
        write_image(&frame_path(dir, k), frame, depth)?;
    }
    Ok(())
}

/// Writes `flow_###.flo` plus a `flow_###.ppm` color rendering for each field.
pub fn write_flows(dir: &Path, flows: &[FlowField]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (k, v) in flows.iter().enumerate() {
        write_flo(&flow_path(dir, k), v)?;
        write_flow_color(&dir.join(format!("flow_{k:03}.ppm")), v, None)?;
    }
    Ok(())
}

pub fn read_flows(dir: &Path) -> Result<Vec<FlowField>> {
    list_dir(dir, &["flo"])?
        .iter()
        .map(|p| read_flo(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

pub fn read_frames_in(dir: &Path) -> Result<ImageSequence> {
    let paths = list_dir(dir, &IMAGE_EXTENSIONS)?;
    if paths.is_empty() {
        bail!("no frames in {}", dir.display());
    }
    read_sequence(&paths)
}
