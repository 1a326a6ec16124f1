use tree_sitter::{Node, Parser};

use super::{RawUnit, Span};

#[derive(Clone)]
enum Scope {
    Class(String),
    Function(String),
}

/// Parses one Python source file. Returns a reason string when the file
/// does not parse cleanly.
pub fn extract_python_file(
    file_path: &str,
    source: &str,
) -> std::result::Result<Vec<RawUnit>, String> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .map_err(|e| format!("grammar load failed: {e}"))?;
    let tree = parser
        .parse(source, None)
        .ok_or_else(|| "parser returned no tree".to_string())?;
    let root = tree.root_node();
    if root.has_error() {
        let (line, _) = first_error(root).unwrap_or((0, 0));
        return Err(format!("syntax error near line {line}"));
    }

    let line_starts = line_starts(source);
    let mut units = Vec::new();
    let mut scope = Vec::new();
    walk(root, source, file_path, &line_starts, &mut scope, &mut units);
    Ok(units)
}

fn first_error(node: Node) -> Option<(usize, usize)> {
    if node.is_error() || node.is_missing() {
        let p = node.start_position();
        return Some((p.row + 1, p.column));
    }
    let mut cursor = node.walk();
    let found = node
        .children(&mut cursor)
        .filter(|c| c.has_error())
        .find_map(first_error);
    found
}

fn walk(
    node: Node,
    source: &str,
    file_path: &str,
    line_starts: &[usize],
    scope: &mut Vec<Scope>,
    out: &mut Vec<RawUnit>,
) {
    match node.kind() {
        "function_definition" => {
            let name = field_text(node, "name", source);
            let outer = match node.parent() {
                Some(p) if p.kind() == "decorated_definition" => p,
                _ => node,
            };
            let span = line_span(outer);
            out.push(RawUnit {
                file_path: file_path.to_string(),
                module_path: scope
                    .iter()
                    .filter_map(|s| match s {
                        Scope::Class(c) => Some(c.clone()),
                        Scope::Function(_) => None,
                    })
                    .collect(),
                scope: scope
                    .iter()
                    .map(|s| match s {
                        Scope::Class(n) | Scope::Function(n) => n.clone(),
                    })
                    .collect(),
                function_name: name.clone(),
                span,
                source_text: slice_lines(source, line_starts, span),
            });
            scope.push(Scope::Function(name));
            recurse(node, source, file_path, line_starts, scope, out);
            scope.pop();
        }
        "class_definition" => {
            scope.push(Scope::Class(field_text(node, "name", source)));
            recurse(node, source, file_path, line_starts, scope, out);
            scope.pop();
        }
        _ => recurse(node, source, file_path, line_starts, scope, out),
    }
}

fn recurse(
    node: Node,
    source: &str,
    file_path: &str,
    line_starts: &[usize],
    scope: &mut Vec<Scope>,
    out: &mut Vec<RawUnit>,
) {
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        walk(child, source, file_path, line_starts, scope, out);
    }
}

fn field_text(node: Node, field: &str, source: &str) -> String {
    node.child_by_field_name(field)
        .and_then(|n| n.utf8_text(source.as_bytes()).ok())
        .unwrap_or_default()
        .to_string()
}

fn line_span(node: Node) -> Span {
    let start = node.start_position();
    let end = node.end_position();
    let mut end_row = end.row;
    if end.column == 0 && end_row > start.row {
        end_row -= 1;
    }
    Span {
        start: start.row + 1,
        end: end_row + 1,
    }
}

fn line_starts(source: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(source.match_indices('\n').map(|(i, _)| i + 1))
        .collect()
}

fn slice_lines(source: &str, line_starts: &[usize], span: Span) -> String {
    let begin = line_starts[span.start - 1];
    let end = line_starts
        .get(span.end)
        .map(|&next| next - 1)
        .unwrap_or(source.len());
    source[begin..end.max(begin)]
        .trim_end_matches('\r')
        .to_string()
}
