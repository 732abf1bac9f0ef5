//! Minimal XML tree reader and deterministic writer shared by the file formats.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Element {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<Element>,
}

impl Element {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn req(&self, key: &str) -> Result<&str, String> {
        self.attr(key)
            .ok_or_else(|| format!("<{}> is missing attribute `{key}`", self.name))
    }

    pub fn parse_attr<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let raw = self.req(key)?;
        raw.trim()
            .parse()
            .map_err(|_| format!("<{}> attribute `{key}` has bad value `{raw}`", self.name))
    }

    pub fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.children.iter().filter(move |c| c.name == name)
    }

    pub fn child(&self, name: &str) -> Option<&Element> {
        self.children.iter().find(|c| c.name == name)
    }
}

fn start_to_element(start: &BytesStart<'_>) -> Result<Element, String> {
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut attrs = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        attrs.push((key, value));
    }
    Ok(Element {
        name,
        attrs,
        children: Vec::new(),
    })
}

/// Parses a whole document and returns its root element.
pub(crate) fn parse_document(bytes: &[u8]) -> Result<Element, String> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;
    let mut buf = Vec::new();
    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| format!("at byte {}: {e}", reader.buffer_position()))?;
        match event {
            Event::Start(start) => stack.push(start_to_element(&start)?),
            Event::Empty(start) => {
                let el = start_to_element(&start)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err("multiple root elements".into()),
                }
            }
            Event::End(_) => {
                let el = stack.pop().ok_or("unbalanced closing tag")?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(el),
                    None if root.is_none() => root = Some(el),
                    None => return Err("multiple root elements".into()),
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(format!("unclosed element <{}>", stack[stack.len() - 1].name));
    }
    root.ok_or_else(|| "document has no root element".into())
}

/// Line-oriented writer with two-space indentation. Attribute order is the
/// caller's order, so output is byte-stable for stable inputs.
pub(crate) struct XmlWriter {
    out: String,
    depth: usize,
    open: Vec<&'static str>,
}

impl XmlWriter {
    pub fn new() -> Self {
        XmlWriter {
            out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
            open: Vec::new(),
        }
    }

    fn tag(&mut self, name: &str, attrs: &[(&str, String)]) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push('<');
        self.out.push_str(name);
        for (k, v) in attrs {
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            self.out.push_str(&quick_xml::escape::escape(v.as_str()));
            self.out.push('"');
        }
    }

    pub fn open(&mut self, name: &'static str, attrs: &[(&str, String)]) {
        self.tag(name, attrs);
        self.out.push_str(">\n");
        self.depth += 1;
        self.open.push(name);
    }

    pub fn empty(&mut self, name: &str, attrs: &[(&str, String)]) {
        self.tag(name, attrs);
        self.out.push_str("/>\n");
    }

    pub fn close(&mut self) {
        let name = self.open.pop().expect("close without open");
        self.depth -= 1;
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str("</");
        self.out.push_str(name);
        self.out.push_str(">\n");
    }

    pub fn finish(mut self) -> Vec<u8> {
        while !self.open.is_empty() {
            self.close();
        }
        self.out.into_bytes()
    }
}

/// Formats a float so that parsing it back yields the same value.
pub(crate) fn num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_and_empty_elements() {
        let doc = br#"<?xml version="1.0"?><a x="1"><b y="&lt;2&gt;"/><c><d/></c></a>"#;
        let root = parse_document(doc).unwrap();
        assert_eq!(root.name, "a");
        assert_eq!(root.attr("x"), Some("1"));
        assert_eq!(root.children[0].attr("y"), Some("<2>"));
        assert_eq!(root.children[1].children[0].name, "d");
    }

    #[test]
    fn rejects_unclosed() {
        assert!(parse_document(b"<a><b></a>").is_err());
        assert!(parse_document(b"").is_err());
    }

    #[test]
    fn writer_escapes_attributes() {
        let mut w = XmlWriter::new();
        w.open("r", &[]);
        w.empty("e", &[("name", "A & B \"q\"".into())]);
        let text = String::from_utf8(w.finish()).unwrap();
        let root = parse_document(text.as_bytes()).unwrap();
        assert_eq!(root.children[0].attr("name"), Some("A & B \"q\""));
    }

    #[test]
    fn num_round_trips() {
        for v in [0.0, 1.5, 123.456789012345, -73.7562, 1e-7, 42.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
