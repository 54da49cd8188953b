//! Annotated reply-tree exports.
//!
//! Every format carries the same node attributes: `aspect`, `stance`,
//! `postrank` and `is_argumentative`. Colors are left to the viewer; aspect
//! and stance are categorical values it can map to fill and border colors.
//! Nodes are ordered by post id and edges by (source, target), so output is
//! a pure function of the inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::backends::ArgumentLabel;
use crate::error::{Error, Result};
use crate::threadgraph::{PostRankResult, ThreadGraph};

pub const GEXF_NAMESPACE: &str = "http://www.gexf.net/1.2draft";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Gexf,
    Dot,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Gexf => "gexf",
            ExportFormat::Dot => "dot",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gexf" => Ok(ExportFormat::Gexf),
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Invalid(format!("unknown export format `{other}`"))),
        }
    }
}

/// One exported node. Absent attributes are omitted from the output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportNode {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stance: Option<String>,
    /// `None` for posts removed before ranking.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub postrank: Option<f64>,
    pub is_argumentative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportEdge {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphExport {
    pub thread_id: String,
    pub directed: bool,
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

impl GraphExport {
    pub fn build(
        graph: &ThreadGraph,
        labels: &HashMap<String, ArgumentLabel>,
        postrank: Option<&PostRankResult>,
    ) -> Self {
        let mut nodes: Vec<ExportNode> = graph
            .nodes()
            .iter()
            .map(|id| {
                let label = labels.get(id);
                ExportNode {
                    id: id.clone(),
                    aspect: label.and_then(|l| l.aspect.clone()),
                    stance: label.map(|l| l.stance.as_str().to_string()),
                    postrank: postrank.and_then(|r| r.scores.get(id).copied()),
                    is_argumentative: label.is_some_and(ArgumentLabel::is_argument),
                }
            })
            .collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut edges: Vec<ExportEdge> = graph
            .edges()
            .map(|(s, t)| ExportEdge {
                source: s.to_string(),
                target: t.to_string(),
            })
            .collect();
        edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        GraphExport {
            thread_id: graph.thread_id().to_string(),
            directed: true,
            nodes,
            edges,
        }
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Gexf => self.to_gexf(),
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("export serializes");
                s.push('\n');
                s
            }
        }
    }

    pub fn to_gexf(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(out, "<gexf xmlns=\"{GEXF_NAMESPACE}\" version=\"1.2\">");
        out.push_str("  <meta>\n    <creator>agora</creator>\n");
        let _ = writeln!(
            out,
            "    <description>reply tree of thread {}</description>",
            xml_escape(&self.thread_id)
        );
        out.push_str("  </meta>\n");
        out.push_str("  <graph mode=\"static\" defaultedgetype=\"directed\">\n");
        out.push_str("    <attributes class=\"node\">\n");
        for (i, (title, ty)) in NODE_ATTRIBUTES.iter().enumerate() {
            let _ = writeln!(
                out,
                "      <attribute id=\"{i}\" title=\"{title}\" type=\"{ty}\"/>"
            );
        }
        out.push_str("    </attributes>\n    <nodes>\n");
        for n in &self.nodes {
            let id = xml_escape(&n.id);
            let _ = writeln!(out, "      <node id=\"{id}\" label=\"{id}\">");
            out.push_str("        <attvalues>\n");
            let values = [
                n.aspect.clone(),
                n.stance.clone(),
                n.postrank.map(|p| p.to_string()),
                Some(n.is_argumentative.to_string()),
            ];
            for (i, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    let _ = writeln!(
                        out,
                        "          <attvalue for=\"{i}\" value=\"{}\"/>",
                        xml_escape(v)
                    );
                }
            }
            out.push_str("        </attvalues>\n      </node>\n");
        }
        out.push_str("    </nodes>\n    <edges>\n");
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                out,
                "      <edge id=\"{i}\" source=\"{}\" target=\"{}\"/>",
                xml_escape(&e.source),
                xml_escape(&e.target)
            );
        }
        out.push_str("    </edges>\n  </graph>\n</gexf>\n");
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_quote(&self.thread_id));
        for n in &self.nodes {
            let mut attrs = Vec::new();
            if let Some(a) = &n.aspect {
                attrs.push(format!("aspect={}", dot_quote(a)));
            }
            if let Some(s) = &n.stance {
                attrs.push(format!("stance={}", dot_quote(s)));
            }
            if let Some(p) = n.postrank {
                attrs.push(format!("postrank={}", dot_quote(&p.to_string())));
            }
            attrs.push(format!(
                "is_argumentative={}",
                dot_quote(&n.is_argumentative.to_string())
            ));
            let _ = writeln!(out, "  {} [{}];", dot_quote(&n.id), attrs.join(", "));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {};",
                dot_quote(&e.source),
                dot_quote(&e.target)
            );
        }
        out.push_str("}\n");
        out
    }
}

const NODE_ATTRIBUTES: [(&str, &str); 4] = [
    ("aspect", "string"),
    ("stance", "string"),
    ("postrank", "double"),
    ("is_argumentative", "boolean"),
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// What a valid GEXF document contains.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GexfSummary {
    pub node_ids: BTreeSet<String>,
    pub edge_count: usize,
    /// Attribute title to the distinct values seen for it.
    pub attribute_values: BTreeMap<String, BTreeSet<String>>,
}

/// Checks a document against the structural rules of the GEXF 1.2 schema:
/// namespace and version, a single `graph` with legal mode and edge type,
/// typed attribute declarations, unique node ids, edges between declared
/// nodes, and attribute values that parse as their declared type.
pub fn validate_gexf(xml: &str) -> Result<GexfSummary> {
    let bad = |m: String| Error::Invalid(format!("invalid GEXF: {m}"));
    let doc = roxmltree::Document::parse(xml).map_err(|e| bad(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "gexf" || root.tag_name().namespace() != Some(GEXF_NAMESPACE) {
        return Err(bad(format!("root element is not gexf in {GEXF_NAMESPACE}")));
    }
    if root.attribute("version") != Some("1.2") {
        return Err(bad("version must be 1.2".into()));
    }
    let graphs = elements(root, "graph");
    let [graph] = graphs.as_slice() else {
        return Err(bad(format!(
            "expected one graph element, found {}",
            graphs.len()
        )));
    };
    if let Some(mode) = graph.attribute("mode") {
        if !matches!(mode, "static" | "dynamic") {
            return Err(bad(format!("graph mode `{mode}`")));
        }
    }
    let edge_type_ok = |t: &str| matches!(t, "directed" | "undirected" | "mutual");
    if let Some(t) = graph.attribute("defaultedgetype") {
        if !edge_type_ok(t) {
            return Err(bad(format!("defaultedgetype `{t}`")));
        }
    }

    let mut declared: HashMap<String, (String, String)> = HashMap::new();
    for block in elements(*graph, "attributes") {
        if !matches!(block.attribute("class"), Some("node" | "edge")) {
            return Err(bad("attributes class must be node or edge".into()));
        }
        for attr in elements(block, "attribute") {
            let (Some(id), Some(title), Some(ty)) = (
                attr.attribute("id"),
                attr.attribute("title"),
                attr.attribute("type"),
            ) else {
                return Err(bad("attribute needs id, title and type".into()));
            };
            if !ATTRIBUTE_TYPES.contains(&ty) {
                return Err(bad(format!("attribute type `{ty}`")));
            }
            if declared
                .insert(id.into(), (title.into(), ty.into()))
                .is_some()
            {
                return Err(bad(format!("attribute id `{id}` declared twice")));
            }
        }
    }

    let mut summary = GexfSummary::default();
    for nodes in elements(*graph, "nodes") {
        for node in elements(nodes, "node") {
            let id = node
                .attribute("id")
                .ok_or_else(|| bad("node without id".into()))?;
            if !summary.node_ids.insert(id.to_string()) {
                return Err(bad(format!("duplicate node id `{id}`")));
            }
            for values in elements(node, "attvalues") {
                for v in elements(values, "attvalue") {
                    let (Some(key), Some(value)) = (v.attribute("for"), v.attribute("value"))
                    else {
                        return Err(bad("attvalue needs for and value".into()));
                    };
                    let (title, ty) = declared
                        .get(key)
                        .ok_or_else(|| bad(format!("attvalue for undeclared attribute `{key}`")))?;
                    if !value_parses(ty, value) {
                        return Err(bad(format!("`{value}` is not a valid {ty}")));
                    }
                    summary
                        .attribute_values
                        .entry(title.clone())
                        .or_default()
                        .insert(value.to_string());
                }
            }
        }
    }
    let mut edge_ids = HashSet::new();
    for edges in elements(*graph, "edges") {
        for edge in elements(edges, "edge") {
            let (Some(s), Some(t)) = (edge.attribute("source"), edge.attribute("target")) else {
                return Err(bad("edge needs source and target".into()));
            };
            for end in [s, t] {
                if !summary.node_ids.contains(end) {
                    return Err(bad(format!("edge references unknown node `{end}`")));
                }
            }
            if let Some(id) = edge.attribute("id") {
                if !edge_ids.insert(id.to_string()) {
                    return Err(bad(format!("duplicate edge id `{id}`")));
                }
            }
            if let Some(t) = edge.attribute("type") {
                if !edge_type_ok(t) {
                    return Err(bad(format!("edge type `{t}`")));
                }
            }
            summary.edge_count += 1;
        }
    }
    Ok(summary)
}

fn elements<'a, 'i>(n: roxmltree::Node<'a, 'i>, name: &str) -> Vec<roxmltree::Node<'a, 'i>> {
    n.children()
        .filter(|c| c.is_element() && c.tag_name().name() == name)
        .collect()
}

const ATTRIBUTE_TYPES: [&str; 9] = [
    "integer",
    "long",
    "double",
    "float",
    "boolean",
    "liststring",
    "string",
    "anyURI",
    "short",
];

fn value_parses(ty: &str, v: &str) -> bool {
    match ty {
        "integer" | "long" | "short" => v.parse::<i64>().is_ok(),
        "double" | "float" => v.parse::<f64>().is_ok(),
        "boolean" => matches!(v, "true" | "false"),
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Stance;
    use crate::threadgraph::{postrank, PostRankConfig};

    fn three() -> (ThreadGraph, HashMap<String, ArgumentLabel>) {
        let g = ThreadGraph::from_parents(
            "t1",
            vec!["a".into(), "b".into(), "c".into()],
            &[None, Some("a".into()), Some("a".into())],
        )
        .unwrap();
        let mut labels = HashMap::new();
        labels.insert(
            "b".to_string(),
            ArgumentLabel {
                post_id: "b".into(),
                aspect: Some("Monsanto".into()),
                stance: Stance::Against,
                confidence: 1.0,
                backend_id: "lexicon".into(),
            },
        );
        (g, labels)
    }

    #[test]
    fn gexf_structure() {
        let (g, labels) = three();
        let pr = postrank(&g, &PostRankConfig::default());
        let xml = GraphExport::build(&g, &labels, Some(&pr)).to_gexf();
        let s = validate_gexf(&xml).unwrap();
        assert_eq!(s.node_ids.len(), 3);
        assert_eq!(s.edge_count, 2);
        assert_eq!(s.attribute_values["aspect"].len(), 1);
        assert_eq!(s.attribute_values["postrank"].len(), 1);
        assert_eq!(
            s.attribute_values["is_argumentative"],
            ["false", "true"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn deterministic_output() {
        let (g, labels) = three();
        for f in [ExportFormat::Gexf, ExportFormat::Dot, ExportFormat::Json] {
            let a = GraphExport::build(&g, &labels, None).render(f);
            let b = GraphExport::build(&g, &labels, None).render(f);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dot_and_json_share_attributes() {
        let (g, labels) = three();
        let e = GraphExport::build(&g, &labels, None);
        let dot = e.to_dot();
        assert!(dot.contains(
            "\"b\" [aspect=\"Monsanto\", stance=\"against\", is_argumentative=\"true\"];"
        ));
        assert!(dot.contains("\"b\" -> \"a\";"));
        let v: serde_json::Value = serde_json::from_str(&e.render(ExportFormat::Json)).unwrap();
        assert_eq!(v["nodes"][1]["aspect"], "Monsanto");
        assert_eq!(v["edges"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn unknown_format() {
        assert!("png".parse::<ExportFormat>().is_err());
        assert_eq!("GEXF".parse::<ExportFormat>().unwrap(), ExportFormat::Gexf);
    }

    #[test]
    fn validator_rejects_broken_documents() {
        let (g, labels) = three();
        let xml = GraphExport::build(&g, &labels, None).to_gexf();
        let cases = [
            xml.replace("version=\"1.2\"", "version=\"1.1\""),
            xml.replace(GEXF_NAMESPACE, "urn:other"),
            xml.replace("target=\"a\"", "target=\"zz\""),
            xml.replace("value=\"true\"", "value=\"yes\""),
            xml.replace("type=\"double\"", "type=\"complex\""),
            xml.replace("<node id=\"c\"", "<node id=\"b\""),
            xml.replace("</gexf>", ""),
        ];
        for c in cases {
            assert!(validate_gexf(&c).is_err(), "{c}");
        }
    }

    #[test]
    fn escapes_markup() {
        let g = ThreadGraph::from_parents("t&<", vec!["x\"y".into()], &[None]).unwrap();
        let xml = GraphExport::build(&g, &HashMap::new(), None).to_gexf();
        let s = validate_gexf(&xml).unwrap();
        assert!(s.node_ids.contains("x\"y"));
    }
}
