//! Minimal element tree over quick-xml, plus attribute helpers shared by the
//! XML formats.

use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::DataError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
}

fn open(e: &BytesStart<'_>) -> Result<Element, DataError> {
    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|err| DataError::schema(&name, format!("bad attribute: {err}")))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| DataError::schema(&name, format!("bad attribute `{key}`: {err}")))?
            .into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
    })
}

/// Parses a whole document into its root element. Text content is ignored.
pub(crate) fn parse_document(bytes: &[u8]) -> Result<Element, DataError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| DataError::schema("document", format!("not UTF-8: {e}")))?;
    let mut reader = Reader::from_str(text);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    loop {
        let event = reader.read_event().map_err(|e| {
            DataError::schema(
                "document",
                format!("malformed XML at byte {}: {e}", reader.error_position()),
            )
        })?;
        match event {
            Event::Start(e) => {
                if root.is_some() {
                    return Err(DataError::schema("document", "content after root element"));
                }
                stack.push(open(&e)?);
            }
            Event::Empty(e) => {
                let el = open(&e)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err(DataError::schema("document", "multiple root elements")),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| DataError::schema("document", "unbalanced end tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None => root = Some(el),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(DataError::schema("document", "unclosed element"));
    }
    root.ok_or_else(|| DataError::schema("document", "no root element"))
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, path: &str, key: &str) -> Result<&str, DataError> {
        self.attr(key)
            .ok_or_else(|| DataError::schema(path, format!("missing attribute `{key}`")))
    }

    pub fn parse_attr<T: FromStr>(&self, path: &str, key: &str) -> Result<T, DataError> {
        let raw = self.require(path, key)?;
        raw.trim().parse().map_err(|_| {
            DataError::schema(path, format!("attribute `{key}` has invalid value `{raw}`"))
        })
    }

    pub fn parse_opt<T: FromStr>(&self, path: &str, key: &str) -> Result<Option<T>, DataError> {
        match self.attr(key) {
            None => Ok(None),
            Some(_) => self.parse_attr(path, key).map(Some),
        }
    }

    /// Like [`parse_attr`](Self::parse_attr) but rejects non-finite floats.
    pub fn finite(&self, path: &str, key: &str) -> Result<f64, DataError> {
        let v: f64 = self.parse_attr(path, key)?;
        if !v.is_finite() {
            return Err(DataError::schema(
                path,
                format!("attribute `{key}` is not finite"),
            ));
        }
        Ok(v)
    }

    pub fn expect_name(&self, path: &str, name: &str) -> Result<(), DataError> {
        if self.name != name {
            return Err(DataError::schema(
                path,
                format!("expected <{name}>, found <{}>", self.name),
            ));
        }
        Ok(())
    }
}

/// Escapes a string for use inside a double-quoted attribute.
pub(crate) fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Shortest round-trip decimal form of a float.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
