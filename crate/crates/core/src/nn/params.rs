use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, shaped slice of a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter storage with a contiguous segment layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a vector from serialised parts, checking that the segments
    /// tile `values` exactly.
    pub fn from_parts(values: Vec<f64>, layout: Vec<Segment>) -> Result<Self> {
        let mut expected = 0;
        for seg in &layout {
            if seg.offset != expected {
                return Err(Error::Format(format!(
                    "segment {} starts at {} but the previous segment ends at {expected}",
                    seg.name, seg.offset
                )));
            }
            expected += seg.len();
        }
        if expected != values.len() {
            return Err(Error::Format(format!(
                "segments cover {expected} values but {} are stored",
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    /// Appends a zero-filled segment and returns its offset.
    pub fn push_segment(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let offset = self.values.len();
        let seg = Segment {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        };
        self.values.resize(offset + seg.len(), 0.0);
        self.layout.push(seg);
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    /// Values of the named segment.
    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|s| &self.values[s.range()])
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Segment>) {
        (self.values, self.layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_contiguous() {
        let mut p = ParamVector::new();
        assert_eq!(p.push_segment("a.w", &[3, 2]), 0);
        assert_eq!(p.push_segment("a.b", &[3]), 6);
        assert_eq!(p.push_segment("b.w", &[1, 3]), 9);
        assert_eq!(p.len(), 12);
        let covered: usize = p.layout().iter().map(Segment::len).sum();
        assert_eq!(covered, p.len());
        assert_eq!(p.slice("a.b").unwrap().len(), 3);
    }

    #[test]
    fn from_parts_rejects_gaps_and_short_values() {
        let seg = |name: &str, offset| Segment {
            name: name.into(),
            shape: vec![2],
            offset,
        };
        assert!(ParamVector::from_parts(vec![0.0; 4], vec![seg("a", 0), seg("b", 2)]).is_ok());
        assert!(ParamVector::from_parts(vec![0.0; 4], vec![seg("a", 0), seg("b", 3)]).is_err());
        assert!(ParamVector::from_parts(vec![0.0; 5], vec![seg("a", 0), seg("b", 2)]).is_err());
    }
}
