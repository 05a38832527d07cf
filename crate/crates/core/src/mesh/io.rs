use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{BoundaryTag, MeshError, Point, PolygonalMesh};

#[derive(Debug, Error)]
pub enum MeshParseError {
    #[error("cannot access mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(#[from] MeshError),
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), MeshParseError> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let l = l.split('#').next().unwrap_or("").trim();
            if !l.is_empty() {
                return Ok((i + 1, l.split_whitespace().collect()));
            }
        }
        Err(MeshParseError::Syntax {
            line: self.last + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn syntax(line: usize, message: impl Into<String>) -> MeshParseError {
    MeshParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse<T: std::str::FromStr>(line: usize, tok: &str) -> Result<T, MeshParseError> {
    tok.parse()
        .map_err(|_| syntax(line, format!("cannot parse '{tok}'")))
}

fn section(lines: &mut Lines, name: &str) -> Result<usize, MeshParseError> {
    let (ln, t) = lines.next_tokens(name)?;
    if t.len() != 2 || t[0] != name {
        return Err(syntax(ln, format!("expected '{name} <count>'")));
    }
    parse(ln, t[1])
}

/// Parses a mesh from the text format.
pub fn parse_mesh(text: &str) -> Result<PolygonalMesh, MeshParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next_tokens("header")?;
    if header != ["polymesh", "1"] {
        return Err(syntax(ln, "expected header 'polymesh 1'"));
    }
    let nv = section(&mut lines, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = lines.next_tokens("vertex")?;
        if t.len() != 2 {
            return Err(syntax(ln, "expected 'x y'"));
        }
        vertices.push(Point::new(parse(ln, t[0])?, parse(ln, t[1])?));
    }
    let nc = section(&mut lines, "cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, t) = lines.next_tokens("cell")?;
        let n: usize = parse(ln, t[0])?;
        if t.len() != n + 1 {
            return Err(syntax(ln, format!("cell declares {n} vertices but lists {}", t.len() - 1)));
        }
        let cell = t[1..]
            .iter()
            .map(|s| parse::<usize>(ln, s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(&bad) = cell.iter().find(|&&v| v >= nv) {
            return Err(syntax(ln, format!("cell references missing vertex {bad}")));
        }
        cells.push(cell);
    }
    let nb = section(&mut lines, "boundary")?;
    let mut tags = HashMap::new();
    for _ in 0..nb {
        let (ln, t) = lines.next_tokens("boundary edge")?;
        if t.len() != 3 {
            return Err(syntax(ln, "expected 'i j tag'"));
        }
        let tag = match t[2] {
            "dirichlet" => BoundaryTag::Dirichlet,
            "neumann" => BoundaryTag::Neumann,
            other => return Err(syntax(ln, format!("unknown boundary tag '{other}'"))),
        };
        tags.insert((parse(ln, t[0])?, parse(ln, t[1])?), tag);
    }
    Ok(PolygonalMesh::new(vertices, cells, &tags)?)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<PolygonalMesh, MeshParseError> {
    parse_mesh(&fs::read_to_string(path)?)
}

/// Serializes a mesh. Coordinates use shortest round-trip formatting.
pub fn format_mesh(mesh: &PolygonalMesh) -> String {
    let mut s = String::from("polymesh 1\n");
    let _ = writeln!(s, "vertices {}", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?}", v.x, v.y);
    }
    let _ = writeln!(s, "cells {}", mesh.num_cells());
    for c in mesh.cells() {
        let _ = write!(s, "{}", c.len());
        for v in c {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let tagged: Vec<_> = mesh
        .edges()
        .iter()
        .filter_map(|e| match e.tag {
            BoundaryTag::Dirichlet => Some((e.vertices, "dirichlet")),
            BoundaryTag::Neumann => Some((e.vertices, "neumann")),
            _ => None,
        })
        .collect();
    let _ = writeln!(s, "boundary {}", tagged.len());
    for ([a, b], t) in tagged {
        let _ = writeln!(s, "{a} {b} {t}");
    }
    s
}

pub fn write_mesh(mesh: &PolygonalMesh, path: impl AsRef<Path>) -> Result<(), MeshParseError> {
    fs::write(path, format_mesh(mesh))?;
    Ok(())
}
