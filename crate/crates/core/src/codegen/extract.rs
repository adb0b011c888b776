use serde::{Deserialize, Serialize};

pub const ENTRYPOINT: &str = "main.py";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub source: String,
    pub entrypoint: String,
    /// Byte range of the code inside the raw model output.
    pub span: (usize, usize),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no code found in the model output")]
pub struct NoCodeFound;

/// `(interior start, interior end)` of every fenced block. An unterminated
/// final fence runs to the end of the text.
fn fenced_blocks(raw: &str) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match open {
                None => open = Some(offset + line.len()),
                Some(start) => {
                    blocks.push((start, offset));
                    open = None;
                }
            }
        }
        offset += line.len();
    }
    if let Some(start) = open {
        blocks.push((start, raw.len()));
    }
    blocks
}

fn looks_like_code(text: &str) -> bool {
    text.lines().any(|l| {
        let l = l.trim_start();
        l.starts_with("import ")
            || l.starts_with("from ")
            || l.starts_with("def ")
            || l.starts_with("class ")
            || l.starts_with("print(")
            || l.starts_with("for ")
            || l.starts_with("while ")
            || l.starts_with("if ")
            || l.starts_with('#')
            || (l.contains('=') && !l.contains(" is ") && l.split_whitespace().count() < 12)
    })
}

/// Pulls a single Python source file out of a coding-stage reply.
pub fn extract_code(raw: &str) -> Result<CodeArtifact, NoCodeFound> {
    let blocks: Vec<(usize, usize)> = fenced_blocks(raw)
        .into_iter()
        .filter(|(s, e)| !raw[*s..*e].trim().is_empty())
        .collect();
    let mut warnings = Vec::new();
    let (source, span) = match blocks.as_slice() {
        [] => {
            if raw.trim().is_empty() || !looks_like_code(raw) {
                return Err(NoCodeFound);
            }
            (raw.to_string(), (0, raw.len()))
        }
        [(s, e)] => (raw[*s..*e].to_string(), (*s, *e)),
        many => {
            warnings.push(format!(
                "{} fenced code blocks were concatenated in order",
                many.len()
            ));
            let parts: Vec<&str> = many
                .iter()
                .map(|(s, e)| raw[*s..*e].trim_end_matches('\n'))
                .collect();
            let mut joined = parts.join("\n\n");
            joined.push('\n');
            (joined, (many[0].0, many[many.len() - 1].1))
        }
    };
    Ok(CodeArtifact {
        source,
        entrypoint: ENTRYPOINT.to_string(),
        span,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_with_prose_around() {
        let raw = "Here is the code:\n```python\nimport gym\nprint(1)\n```\nGood luck!";
        let code = extract_code(raw).unwrap();
        assert_eq!(code.source, "import gym\nprint(1)\n");
        assert_eq!(&raw[code.span.0..code.span.1], code.source);
        assert!(code.warnings.is_empty());
    }

    #[test]
    fn pure_source_is_unchanged() {
        let raw = "import math\n\nx = math.pi\nprint(x)\n";
        assert_eq!(extract_code(raw).unwrap().source, raw);
    }

    #[test]
    fn two_blocks_are_concatenated_with_warning() {
        let raw = "Env:\n```python\nclass Env:\n    pass\n```\nTraining:\n```\nenv = Env()\n```\n";
        let code = extract_code(raw).unwrap();
        assert_eq!(code.source, "class Env:\n    pass\n\nenv = Env()\n");
        assert_eq!(code.warnings.len(), 1);
    }

    #[test]
    fn unterminated_fence_runs_to_end() {
        let code = extract_code("```python\nprint('hi')\n").unwrap();
        assert_eq!(code.source, "print('hi')\n");
    }

    #[test]
    fn prose_only_has_no_code() {
        assert_eq!(
            extract_code("I cannot help with that request."),
            Err(NoCodeFound)
        );
        assert_eq!(extract_code("   \n"), Err(NoCodeFound));
    }
}
