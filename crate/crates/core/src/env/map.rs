//! Plain-text arena maps.
//!
//! One character per unit cell, first line at the top of the arena:
//! `.` free, `#` obstacle, `S` start, `G` goal. Horizontal runs of `#` become
//! a single rectangle.

use thiserror::Error;

use super::Rect;

#[derive(Debug, Clone, PartialEq)]
pub struct MapLayout {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Rect>,
    pub start: Option<(f64, f64)>,
    pub goal: (f64, f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("line {line}: unexpected character `{ch}`")]
    BadChar { line: usize, ch: char },
    #[error("map needs exactly one `G`, found {0}")]
    Goal(usize),
    #[error("map has {0} `S` cells, at most one is allowed")]
    Start(usize),
}

pub fn parse_map(text: &str) -> Result<MapLayout, MapError> {
    let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let height = rows.len();
    let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
    let mut obstacles = Vec::new();
    let mut starts = Vec::new();
    let mut goals = Vec::new();

    for (row, line) in rows.iter().enumerate() {
        let y0 = (height - 1 - row) as f64;
        let mut run_start: Option<usize> = None;
        let chars: Vec<char> = line.chars().collect();
        for col in 0..=chars.len() {
            let ch = chars.get(col).copied().unwrap_or('.');
            let centre = (col as f64 + 0.5, y0 + 0.5);
            match ch {
                '#' => {
                    run_start.get_or_insert(col);
                    continue;
                }
                '.' => {}
                'S' => starts.push(centre),
                'G' => goals.push(centre),
                other => return Err(MapError::BadChar { line: row + 1, ch: other }),
            }
            if let Some(c0) = run_start.take() {
                obstacles.push(Rect::new(c0 as f64, y0, col as f64, y0 + 1.0));
            }
        }
    }
    if goals.len() != 1 {
        return Err(MapError::Goal(goals.len()));
    }
    if starts.len() > 1 {
        return Err(MapError::Start(starts.len()));
    }
    Ok(MapLayout {
        width: width as f64,
        height: height as f64,
        obstacles,
        start: starts.first().copied(),
        goal: goals[0],
    })
}
