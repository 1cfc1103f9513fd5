//! The intention-inference prompt.

use crate::frontend::MethodSnippet;

use super::GatewayError;

/// Identifies the template wording; part of every cache key.
pub const TEMPLATE_ID: &str = "leakscope-intent-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    /// Source lines prefixed with `"N: "`.
    pub numbered_code: String,
    pub template_id: &'static str,
}

impl PromptRequest {
    pub fn for_snippet(snippet: &MethodSnippet) -> Self {
        Self {
            numbered_code: snippet.numbered_code(),
            template_id: TEMPLATE_ID,
        }
    }
}

const TASK: &str = "You are reviewing a Java method for resource leaks. \
A resource is an object that holds a finite system facility (a file, stream, \
socket, database cursor, lock, wake lock, and the like) and must be explicitly \
given back once it is no longer needed.";

const INSTRUCTIONS: [&str; 5] = [
    "Determine the type of every object that the method creates, receives or uses.",
    "Decide which of those types are resources that must be explicitly released.",
    "Find the statements that acquire such a resource, for example by construction, \
opening, obtaining or locking it.",
    "Find the statements that release such a resource, for example by closing, \
unlocking, recycling or releasing it.",
    "Find the conditions that check whether such a resource is reachable before it \
is used or released, for example a null check or an isOpen() test.",
];

const FORMAT: &str = "Report each finding on its own line, using exactly one of the \
following forms, where <N> is the line number shown before the code, <code> is the \
relevant expression and <var> is the variable holding the resource:\n\
line <N>: <code> acquires <var> resource\n\
line <N>: <code> releases <var> resource\n\
line <N>: <code> validates reachability of <var> resource\n\
Do not report anything else in these forms.";

/// Renders the prompt: task, instructions, output format, then the code.
pub fn render_prompt(req: &PromptRequest) -> Result<String, GatewayError> {
    if req.numbered_code.trim().is_empty() {
        return Err(GatewayError::EmptyCode);
    }
    let mut out = String::new();
    out.push_str(TASK);
    out.push_str("\n\nWork through the following steps in order:\n");
    for (i, step) in INSTRUCTIONS.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, step));
    }
    out.push_str("\nOutput format:\n");
    out.push_str(FORMAT);
    out.push_str("\n\nCode:\n");
    out.push_str(req.numbered_code.trim_end_matches('\n'));
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_method;

    #[test]
    fn code_comes_last() {
        let s = parse_method("void m() {\n  f.close();\n}", 10).unwrap();
        let prompt = render_prompt(&PromptRequest::for_snippet(&s)).unwrap();
        let tail: Vec<_> = prompt.lines().rev().take(3).collect();
        assert_eq!(tail, ["12: }", "11:   f.close();", "10: void m() {"]);
    }

    #[test]
    fn sections_are_ordered() {
        let s = parse_method("void m() {}", 1).unwrap();
        let p = render_prompt(&PromptRequest::for_snippet(&s)).unwrap();
        let pos = |needle: &str| p.find(needle).unwrap();
        assert!(pos("resource leaks") < pos("1. "));
        assert!(pos("1. ") < pos("5. "));
        assert!(pos("5. ") < pos("Output format"));
        assert!(pos("validates reachability of <var> resource") < pos("1: void m() {}"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = parse_method("void m() {\n  a();\n}", 3).unwrap();
        let req = PromptRequest::for_snippet(&s);
        assert_eq!(render_prompt(&req).unwrap(), render_prompt(&req).unwrap());
    }

    #[test]
    fn empty_code_is_rejected() {
        let req = PromptRequest {
            numbered_code: "  \n".into(),
            template_id: TEMPLATE_ID,
        };
        assert!(matches!(render_prompt(&req), Err(GatewayError::EmptyCode)));
    }
}
