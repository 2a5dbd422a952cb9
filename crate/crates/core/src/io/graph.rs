//! GraphML and DOT export of social graphs. Nodes are emitted in
//! lexicographic order and edges by ordered name pair; weights use the
//! shortest decimal that reads back to the same value.

use std::collections::{BTreeMap, BTreeSet};

use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, BytesText, Event};
use quick_xml::{Reader, Writer};

use crate::error::{Error, Result};
use crate::socialnet::{Layer, SocialGraph};
use crate::svm::GroupKey;

fn xml_error(e: impl std::fmt::Display) -> Error {
    Error::parse(0, e)
}

pub fn to_graphml(g: &SocialGraph) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    let mut emit = |e: Event| w.write_event(e).expect("writing to memory");
    emit(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)));
    emit(Event::Start(
        BytesStart::new("graphml").with_attributes([("xmlns", "http://graphml.graphdrawing.org/xmlns")]),
    ));
    emit(Event::Empty(BytesStart::new("key").with_attributes([
        ("id", "layer"),
        ("for", "graph"),
        ("attr.name", "layer"),
        ("attr.type", "string"),
    ])));
    emit(Event::Empty(BytesStart::new("key").with_attributes([
        ("id", "weight"),
        ("for", "edge"),
        ("attr.name", "weight"),
        ("attr.type", "double"),
    ])));
    emit(Event::Start(
        BytesStart::new("graph").with_attributes([("id", g.layer.as_str()), ("edgedefault", "undirected")]),
    ));
    emit(Event::Start(BytesStart::new("data").with_attributes([("key", "layer")])));
    emit(Event::Text(BytesText::new(g.layer.as_str())));
    emit(Event::End(BytesEnd::new("data")));
    let nodes: BTreeSet<&str> = g.nodes.iter().map(String::as_str).collect();
    for n in nodes {
        emit(Event::Empty(BytesStart::new("node").with_attributes([("id", n)])));
    }
    for (k, w) in &g.edges {
        emit(Event::Start(
            BytesStart::new("edge").with_attributes([("source", k.0.as_str()), ("target", k.1.as_str())]),
        ));
        emit(Event::Start(BytesStart::new("data").with_attributes([("key", "weight")])));
        emit(Event::Text(BytesText::new(&format!("{w}"))));
        emit(Event::End(BytesEnd::new("data")));
        emit(Event::End(BytesEnd::new("edge")));
    }
    emit(Event::End(BytesEnd::new("graph")));
    emit(Event::End(BytesEnd::new("graphml")));
    let mut s = String::from_utf8(w.into_inner()).expect("utf-8");
    s.push('\n');
    s
}

fn parse_layer(s: &str) -> Result<Layer> {
    Layer::ALL
        .into_iter()
        .find(|l| l.as_str() == s)
        .ok_or_else(|| Error::schema(0, "layer", format!("unknown layer `{s}`")))
}

fn attr(e: &BytesStart, name: &str) -> Result<String> {
    for a in e.attributes() {
        let a = a.map_err(xml_error)?;
        if a.key.as_ref() == name.as_bytes() {
            return Ok(a.unescape_value().map_err(xml_error)?.into_owned());
        }
    }
    Err(Error::schema(0, name, "missing attribute"))
}

/// Reads graphs written by [`to_graphml`].
pub fn read_graphml(text: &str) -> Result<SocialGraph> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut layer = None;
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeMap::new();
    let mut edge: Option<GroupKey> = None;
    let mut data_key: Option<String> = None;
    loop {
        match reader.read_event().map_err(xml_error)? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"node" => {
                nodes.insert(attr(&e, "id")?);
            }
            Event::Start(e) if e.name().as_ref() == b"edge" => {
                edge = Some(GroupKey::new(attr(&e, "source")?, attr(&e, "target")?));
            }
            Event::Start(e) if e.name().as_ref() == b"data" => data_key = Some(attr(&e, "key")?),
            Event::Text(t) => {
                let text = t.unescape().map_err(xml_error)?;
                match (data_key.as_deref(), &edge) {
                    (Some("layer"), None) => layer = Some(parse_layer(&text)?),
                    (Some("weight"), Some(k)) => {
                        let w: f64 = text
                            .parse()
                            .map_err(|_| Error::schema(0, "weight", format!("cannot parse `{text}`")))?;
                        edges.insert(k.clone(), w);
                    }
                    _ => {}
                }
            }
            Event::End(e) if e.name().as_ref() == b"data" => data_key = None,
            Event::End(e) if e.name().as_ref() == b"edge" => edge = None,
            Event::Eof => break,
            _ => {}
        }
    }
    let layer = layer.ok_or_else(|| Error::schema(0, "layer", "graph has no layer"))?;
    for k in edges.keys() {
        if !nodes.contains(&k.0) || !nodes.contains(&k.1) {
            return Err(Error::schema(0, "edge", format!("edge {}–{} references an unknown node", k.0, k.1)));
        }
    }
    Ok(SocialGraph {
        layer,
        nodes: nodes.into_iter().collect(),
        edges,
    })
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(g: &SocialGraph) -> String {
    let mut out = format!("graph {} {{\n", dot_id(g.layer.as_str()));
    let nodes: BTreeSet<&str> = g.nodes.iter().map(String::as_str).collect();
    for n in nodes {
        out.push_str(&format!("  {};\n", dot_id(n)));
    }
    for (k, w) in &g.edges {
        out.push_str(&format!("  {} -- {} [weight={w}];\n", dot_id(&k.0), dot_id(&k.1)));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> SocialGraph {
        let mut edges = BTreeMap::new();
        edges.insert(GroupKey::new("B", "A"), 3.0);
        edges.insert(GroupKey::new("C", "B"), 0.1 + 0.2);
        SocialGraph {
            layer: Layer::Agonistic,
            nodes: vec!["B".into(), "A".into(), "C & \"D\"".into(), "C".into()],
            edges,
        }
    }

    #[test]
    fn nodes_are_lexicographic() {
        let xml = to_graphml(&graph());
        let a = xml.find("<node id=\"A\"/>").unwrap();
        let b = xml.find("<node id=\"B\"/>").unwrap();
        assert!(a < b);
        let dot = to_dot(&graph());
        assert!(dot.find("\"A\";").unwrap() < dot.find("\"B\";").unwrap());
        assert!(dot.contains("\"B\" -- \"C\" [weight=0.30000000000000004];"));
    }

    #[test]
    fn graphml_round_trips_exactly() {
        let g = graph();
        let back = read_graphml(&to_graphml(&g)).unwrap();
        let mut expected = g.clone();
        expected.nodes.sort();
        assert_eq!(back, expected);
        assert_eq!(to_graphml(&back), to_graphml(&g));
    }

    #[test]
    fn dangling_edge_rejected() {
        let xml = to_graphml(&graph()).replace("<node id=\"A\"/>", "");
        assert!(matches!(read_graphml(&xml), Err(Error::Schema { .. })));
    }
}
