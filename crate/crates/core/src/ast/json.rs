use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Ast, AstError};

/// Nested interchange form of an AST: `{"label", "value", "children"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstTree {
    pub label: String,
    pub value: Option<String>,
    pub children: Vec<AstTree>,
}

/// Serializes with 2-space indentation and keys in the order label, value,
/// children. Structurally equal trees produce identical bytes.
pub fn ast_to_json(ast: &Ast) -> String {
    serde_json::to_string_pretty(&ast.to_tree()).expect("AstTree serialization is infallible")
}

/// Reads an AST document.
///
/// Two shapes are accepted:
/// * nested: a single root object `{"label", "value", "children": [...]}`;
/// * flat: `{"nodes": [{"id", "label", "value", "children": [ids]}], "root"?}`
///   with arbitrary integer ids, which are checked for cycles, shared
///   children, orphans and multiple roots, then renumbered in pre-order.
pub fn ast_from_json(document: &str) -> Result<Ast, AstError> {
    let value: Value = serde_json::from_str(document)?;
    let obj = value
        .as_object()
        .ok_or_else(|| AstError::Schema("document root must be an object".into()))?;
    if obj.contains_key("nodes") {
        from_flat(obj)
    } else {
        let tree = nested(&value, "$")?;
        Ok(Ast::from_tree(&tree))
    }
}

fn field<'v>(obj: &'v Map<String, Value>, key: &str, path: &str) -> Result<&'v Value, AstError> {
    obj.get(key)
        .ok_or_else(|| AstError::Schema(format!("{path}: missing field `{key}`")))
}

fn label_of(obj: &Map<String, Value>, path: &str) -> Result<String, AstError> {
    field(obj, "label", path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| AstError::Schema(format!("{path}.label: expected string")))
}

fn value_of(obj: &Map<String, Value>, path: &str) -> Result<Option<String>, AstError> {
    match obj.get("value") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(AstError::Schema(format!(
            "{path}.value: expected string or null"
        ))),
    }
}

fn nested(value: &Value, path: &str) -> Result<AstTree, AstError> {
    let obj = value
        .as_object()
        .ok_or_else(|| AstError::Schema(format!("{path}: expected object")))?;
    let label = label_of(obj, path)?;
    let value = value_of(obj, path)?;
    let children = field(obj, "children", path)?
        .as_array()
        .ok_or_else(|| AstError::Schema(format!("{path}.children: expected array")))?
        .iter()
        .enumerate()
        .map(|(i, c)| nested(c, &format!("{path}.children[{i}]")))
        .collect::<Result<_, _>>()?;
    Ok(AstTree {
        label,
        value,
        children,
    })
}

struct FlatNode {
    label: String,
    value: Option<String>,
    children: Vec<i64>,
}

fn from_flat(obj: &Map<String, Value>) -> Result<Ast, AstError> {
    let list = obj["nodes"]
        .as_array()
        .ok_or_else(|| AstError::Schema("$.nodes: expected array".into()))?;
    if list.is_empty() {
        return Err(AstError::Structure("tree has no nodes".into()));
    }

    let mut nodes: BTreeMap<i64, FlatNode> = BTreeMap::new();
    for (i, item) in list.iter().enumerate() {
        let path = format!("$.nodes[{i}]");
        let o = item
            .as_object()
            .ok_or_else(|| AstError::Schema(format!("{path}: expected object")))?;
        let id = field(o, "id", &path)?
            .as_i64()
            .ok_or_else(|| AstError::Schema(format!("{path}.id: expected integer")))?;
        let children = field(o, "children", &path)?
            .as_array()
            .ok_or_else(|| AstError::Schema(format!("{path}.children: expected array")))?
            .iter()
            .map(|c| {
                c.as_i64().ok_or_else(|| {
                    AstError::Schema(format!("{path}.children: expected integer ids"))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let node = FlatNode {
            label: label_of(o, &path)?,
            value: value_of(o, &path)?,
            children,
        };
        if nodes.insert(id, node).is_some() {
            return Err(AstError::Structure(format!("duplicate node id {id}")));
        }
    }

    let mut parent_of: HashMap<i64, i64> = HashMap::new();
    for (&id, node) in &nodes {
        for &c in &node.children {
            if c == id {
                return Err(AstError::Structure(format!("node {id} lists itself as a child")));
            }
            if !nodes.contains_key(&c) {
                return Err(AstError::Structure(format!(
                    "node {id} references unknown child {c}"
                )));
            }
            if let Some(prev) = parent_of.insert(c, id) {
                return Err(AstError::Structure(format!(
                    "node {c} has several parents ({prev}, {id})"
                )));
            }
        }
    }

    let roots: Vec<i64> = nodes
        .keys()
        .copied()
        .filter(|id| !parent_of.contains_key(id))
        .collect();
    let root = match obj.get("root") {
        Some(r) => {
            let r = r
                .as_i64()
                .ok_or_else(|| AstError::Schema("$.root: expected integer".into()))?;
            if !roots.contains(&r) {
                return Err(AstError::Structure(format!("declared root {r} has a parent")));
            }
            r
        }
        None => match roots.as_slice() {
            [r] => *r,
            [] => return Err(AstError::Structure("no root: every node has a parent (cycle)".into())),
            _ => return Err(AstError::Structure(format!("multiple roots: {roots:?}"))),
        },
    };
    if roots.len() > 1 {
        return Err(AstError::Structure(format!("multiple roots: {roots:?}")));
    }

    // Every node has at most one parent, so a walk from the root visits each
    // reachable node once; anything left over sits on a cycle or hangs off one.
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        order.push(id);
        stack.extend(nodes[&id].children.iter().rev());
    }
    if order.len() != nodes.len() {
        let seen: std::collections::HashSet<i64> = order.iter().copied().collect();
        let orphan = nodes.keys().find(|id| !seen.contains(id)).unwrap();
        return Err(AstError::Structure(format!(
            "node {orphan} is not reachable from root {root}"
        )));
    }

    fn build(nodes: &BTreeMap<i64, FlatNode>, id: i64) -> super::AstTree {
        let n = &nodes[&id];
        super::AstTree {
            label: n.label.clone(),
            value: n.value.clone(),
            children: n.children.iter().map(|&c| build(nodes, c)).collect(),
        }
    }
    Ok(Ast::from_tree(&build(&nodes, root)))
}
