//! Plain-text snapshots of a [`FlowState`].
//!
//! ```text
//! manifold1=torus(6.283185307179586,6.283185307179586)
//! manifold2=sphere(2,1)
//! shape=64,128
//! time=0.125
//! step=812
//! 0.1 0.2 0.9746794344808963
//! ...
//! ```
//!
//! One row per node in row-major order. Numbers use Rust's shortest
//! round-trip formatting, so reading back is bit-exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::{FlowState, MapField, Target};
use crate::geometry::ManifoldSpec;
use crate::grid::make_grid;

pub fn snapshot_write(state: &FlowState, mut out: impl Write) -> Result<()> {
    let field = &state.field;
    let mut s = String::new();
    s.push_str(&format!("manifold1={}\n", field.grid.spec()));
    s.push_str(&format!("manifold2={}\n", field.target));
    let shape: Vec<String> = field.grid.shape().iter().map(|n| n.to_string()).collect();
    s.push_str(&format!("shape={}\n", shape.join(",")));
    s.push_str(&format!("time={}\n", state.time));
    s.push_str(&format!("step={}\n", state.step_index));
    let c = field.comps();
    for row in field.values.chunks(c) {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, adv) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += adv;
        Some((start, line))
    }

    fn header(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (off, line) = self.line().ok_or_else(|| Error::Format {
            offset: self.pos,
            message: format!("unexpected end of input, expected `{key}=`"),
        })?;
        let value = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| Error::Format {
                offset: off,
                message: format!("expected header `{key}=`"),
            })?;
        Ok((off + key.len() + 1, value))
    }
}

fn fmt_err(offset: usize, e: impl std::fmt::Display) -> Error {
    Error::Format {
        offset,
        message: e.to_string(),
    }
}

pub fn snapshot_read(mut input: impl Read) -> Result<FlowState> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| fmt_err(0, format!("unreadable snapshot: {e}")))?;
    let mut cur = Cursor {
        text: &text,
        pos: 0,
    };
    let (o1, m1) = cur.header("manifold1")?;
    let sigma1: ManifoldSpec = m1.parse().map_err(|e| fmt_err(o1, e))?;
    let (o2, m2) = cur.header("manifold2")?;
    let sigma2: ManifoldSpec = m2.parse().map_err(|e| fmt_err(o2, e))?;
    let (o3, sh) = cur.header("shape")?;
    let shape = sh
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| fmt_err(o3, format!("bad shape `{sh}`: {e}")))?;
    let (o4, t) = cur.header("time")?;
    let time: f64 = t.parse().map_err(|e| fmt_err(o4, format!("bad time `{t}`: {e}")))?;
    let (o5, st) = cur.header("step")?;
    let step: u64 = st.parse().map_err(|e| fmt_err(o5, format!("bad step `{st}`: {e}")))?;

    let grid = make_grid(&sigma1, &shape).map_err(|e| fmt_err(o3, e))?;
    let c = Target::from_spec(&sigma2).map_err(|e| fmt_err(o2, e))?.comps();
    let mut values = Vec::with_capacity(grid.len() * c);
    let mut rows = 0usize;
    while let Some((off, line)) = cur.line() {
        if line.trim().is_empty() {
            continue;
        }
        if rows == grid.len() {
            return Err(fmt_err(
                off,
                format!("value-count mismatch: more than {} rows for shape {sh}", grid.len()),
            ));
        }
        let mut k = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| fmt_err(off, format!("bad number `{tok}`: {e}")))?;
            values.push(v);
            k += 1;
        }
        if k != c {
            return Err(fmt_err(off, format!("expected {c} components per row, found {k}")));
        }
        rows += 1;
    }
    if rows != grid.len() {
        return Err(fmt_err(
            text.len(),
            format!(
                "value-count mismatch: shape {sh} needs {} rows, found {rows}",
                grid.len()
            ),
        ));
    }
    Ok(FlowState {
        time,
        step_index: step,
        field: MapField {
            grid,
            target: sigma2,
            values,
        },
    })
}
