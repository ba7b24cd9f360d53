//! Human-readable tree formats.
//!
//! The text format is an indented if/else listing:
//!
//! ```text
//! if f2 < 1.5:  # obstacle_distance
//!     action: left  # Q: [-4.1000, -4.9000, -4.5000, -4.0500]
//! else:
//!     action: toward  # Q: [-3.2000, -4.8000, -4.4000, -4.4000]
//! ```
//!
//! Thresholds are written with the shortest representation that parses back
//! to the same `f64`, so a parsed tree routes states exactly like the tree
//! it was written from. Leaves name their action explicitly; the Q-values
//! are informational and rounded to four decimals. DOT output numbers nodes
//! in pre-order.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tree::{ActionId, NodeId, NodeKind, PolicyTree};

/// Anything that maps a state to an action.
pub trait Policy {
    fn act(&self, state: &[f64]) -> ActionId;
}

impl Policy for PolicyTree {
    fn act(&self, state: &[f64]) -> ActionId {
        PolicyTree::act(self, state).expect("state dimension must match the tree")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Text,
    Dot,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "txt" => Ok(Self::Text),
            "dot" => Ok(Self::Dot),
            other => Err(format!("unknown export format `{other}` (expected text or dot)")),
        }
    }
}

/// Structural snapshot of a policy, independent of training state.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyNode {
    Branch {
        dimension: usize,
        threshold: f64,
        left: Box<PolicyNode>,
        right: Box<PolicyNode>,
    },
    Leaf {
        action: ActionId,
        q: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyView {
    pub root: PolicyNode,
    pub action_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl PolicyNode {
    pub fn size(&self) -> usize {
        match self {
            PolicyNode::Leaf { .. } => 1,
            PolicyNode::Branch { left, right, .. } => 1 + left.size() + right.size(),
        }
    }
}

impl PolicyView {
    pub fn from_tree(tree: &PolicyTree) -> Self {
        fn build(tree: &PolicyTree, id: NodeId) -> PolicyNode {
            match &tree.node(id).kind {
                NodeKind::Leaf(leaf) => PolicyNode::Leaf {
                    action: leaf.best_action(),
                    q: leaf.q.clone(),
                },
                NodeKind::Branch {
                    dimension,
                    threshold,
                    left,
                    right,
                } => PolicyNode::Branch {
                    dimension: *dimension,
                    threshold: *threshold,
                    left: Box::new(build(tree, *left)),
                    right: Box::new(build(tree, *right)),
                },
            }
        }
        Self {
            root: build(tree, tree.root()),
            action_names: tree.action_names().to_vec(),
            feature_names: tree.space().names.clone(),
        }
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    fn action_name(&self, action: ActionId) -> String {
        self.action_names
            .get(action.0)
            .cloned()
            .unwrap_or_else(|| format!("a{}", action.0))
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Text => self.to_text(),
            ExportFormat::Dot => self.to_dot(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&self.root, 0, &mut out);
        out
    }

    fn write_text(&self, node: &PolicyNode, depth: usize, out: &mut String) {
        let indent = "    ".repeat(depth);
        match node {
            PolicyNode::Leaf { action, q } => {
                let _ = writeln!(out, "{indent}action: {}  # Q: {}", self.action_name(*action), format_q(q));
            }
            PolicyNode::Branch {
                dimension,
                threshold,
                left,
                right,
            } => {
                let _ = write!(out, "{indent}if f{dimension} < {threshold}:");
                if let Some(name) = self.feature_names.get(*dimension) {
                    let _ = write!(out, "  # {name}");
                }
                out.push('\n');
                self.write_text(left, depth + 1, out);
                let _ = writeln!(out, "{indent}else:");
                self.write_text(right, depth + 1, out);
            }
        }
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph policy {\n    node [fontname=\"Helvetica\"];\n");
        let mut next_id = 0;
        self.write_dot(&self.root, &mut next_id, &mut out);
        out.push_str("}\n");
        out
    }

    fn write_dot(&self, node: &PolicyNode, next_id: &mut usize, out: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        match node {
            PolicyNode::Leaf { action, q } => {
                let _ = writeln!(
                    out,
                    "    n{id} [shape=ellipse, label=\"{}\\nQ: {}\"];",
                    escape(&self.action_name(*action)),
                    format_q(q)
                );
            }
            PolicyNode::Branch {
                dimension,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "    n{id} [shape=box, label=\"f{dimension} < {threshold}\"];");
                let l = self.write_dot(left, next_id, out);
                let r = self.write_dot(right, next_id, out);
                let _ = writeln!(out, "    n{id} -> n{l} [label=\"true\"];");
                let _ = writeln!(out, "    n{id} -> n{r} [label=\"false\"];");
            }
        }
        id
    }
}

impl Policy for PolicyView {
    fn act(&self, state: &[f64]) -> ActionId {
        let mut node = &self.root;
        loop {
            match node {
                PolicyNode::Leaf { action, .. } => return *action,
                PolicyNode::Branch {
                    dimension,
                    threshold,
                    left,
                    right,
                } => node = if state[*dimension] < *threshold { left } else { right },
            }
        }
    }
}

pub fn export_tree(tree: &PolicyTree, format: ExportFormat) -> String {
    PolicyView::from_tree(tree).render(format)
}

fn format_q(q: &[f64]) -> String {
    let parts: Vec<String> = q.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("line {line}: unknown action `{name}`")]
    UnknownAction { line: usize, name: String },
}

/// Parses the text format back into a [`PolicyView`]. Action names are
/// resolved against `action_names`; Q lists are kept as written.
pub fn parse_text(input: &str, action_names: &[String], feature_names: &[String]) -> Result<PolicyView, ParseError> {
    let lines: Vec<(usize, usize, &str)> = input
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            let indent = l.len() - l.trim_start_matches(' ').len();
            (i + 1, indent, l.trim())
        })
        .collect();
    let mut pos = 0;
    let root = parse_node(&lines, &mut pos, 0, action_names, feature_names.len())?;
    if let Some(&(line, _, _)) = lines.get(pos) {
        return Err(ParseError::Syntax {
            line,
            message: "trailing content after the root node".into(),
        });
    }
    Ok(PolicyView {
        root,
        action_names: action_names.to_vec(),
        feature_names: feature_names.to_vec(),
    })
}

fn parse_node(
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    indent: usize,
    action_names: &[String],
    dims: usize,
) -> Result<PolicyNode, ParseError> {
    let &(line, got_indent, text) = lines.get(*pos).ok_or(ParseError::UnexpectedEnd)?;
    let syntax = |message: String| ParseError::Syntax { line, message };
    if got_indent != indent {
        return Err(syntax(format!("expected indentation {indent}, found {got_indent}")));
    }
    *pos += 1;
    let body = text.split('#').next().unwrap_or("").trim();

    if let Some(name) = body.strip_prefix("action:") {
        let name = name.trim();
        let index = action_names
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| ParseError::UnknownAction {
                line,
                name: name.to_string(),
            })?;
        let q = text
            .split_once("# Q:")
            .map(|(_, list)| parse_q_list(list.trim()))
            .transpose()
            .map_err(syntax)?
            .unwrap_or_default();
        return Ok(PolicyNode::Leaf {
            action: ActionId(index),
            q,
        });
    }

    let cond = body
        .strip_prefix("if ")
        .and_then(|c| c.strip_suffix(':'))
        .ok_or_else(|| syntax(format!("expected `if f<m> < <value>:` or `action: <name>`, found `{body}`")))?;
    let (feature, value) = cond
        .split_once(" < ")
        .ok_or_else(|| syntax(format!("malformed condition `{cond}`")))?;
    let dimension: usize = feature
        .trim()
        .strip_prefix('f')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| syntax(format!("malformed feature `{feature}`")))?;
    if dimension >= dims {
        return Err(syntax(format!("feature f{dimension} out of range for {dims} features")));
    }
    let threshold: f64 = value
        .trim()
        .parse()
        .map_err(|_| syntax(format!("malformed threshold `{value}`")))?;

    let left = parse_node(lines, pos, indent + 4, action_names, dims)?;
    let &(else_line, else_indent, else_text) = lines.get(*pos).ok_or(ParseError::UnexpectedEnd)?;
    if else_indent != indent || else_text.split('#').next().unwrap_or("").trim() != "else:" {
        return Err(ParseError::Syntax {
            line: else_line,
            message: "expected `else:`".into(),
        });
    }
    *pos += 1;
    let right = parse_node(lines, pos, indent + 4, action_names, dims)?;
    Ok(PolicyNode::Branch {
        dimension,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn parse_q_list(s: &str) -> Result<Vec<f64>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("malformed Q list `{s}`"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("malformed Q value `{v}`")))
        .collect()
}
