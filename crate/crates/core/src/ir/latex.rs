//! Lexical extraction of model symbols from LaTeX formulas.
//!
//! This is not a LaTeX parser. It walks the source once, collecting
//! identifiers that look like declared model symbols:
//!
//! * the contents of text-style groups (`\text{ChannelGain}`), where single
//!   uppercase letters also count (`\text{B}`);
//! * bare CamelCase runs in math mode (`StockLevel`), which must contain a
//!   lowercase letter so that math notation (`J`, `R`, `T`) is skipped.
//!
//! Subscripts and superscripts are skipped, as are command names (Greek
//! letters, `\log`, `\min`, ...) and the arguments of font-alphabet commands
//! (`\mathbb{E}`, `\mathcal{S}`).

use std::collections::BTreeSet;

const TEXT_COMMANDS: &[&str] = &[
    "text",
    "textbf",
    "textit",
    "textrm",
    "texttt",
    "textsf",
    "mathrm",
    "mathit",
    "mathbf",
    "mathsf",
    "mathtt",
    "operatorname",
    "mbox",
];

const ALPHABET_COMMANDS: &[&str] = &["mathbb", "mathcal", "mathfrak", "mathscr", "boldsymbol"];

/// Returns every model-symbol candidate in `formula`.
pub fn extract_latex_symbols(formula: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    Lexer::new(formula).run(&mut out);
    out
}

/// Identifier shape shared by declarations and extraction: leading ASCII
/// uppercase letter followed by ASCII alphanumerics.
pub fn is_camel_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_alphanumeric())
}

fn is_bare_symbol(s: &str) -> bool {
    is_camel_identifier(s) && s.chars().any(|c| c.is_ascii_lowercase())
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            chars: src.char_indices().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.src.len(), |&(i, _)| i)
    }

    fn run(&mut self, out: &mut BTreeSet<String>) {
        while let Some(c) = self.peek() {
            match c {
                '\\' => self.command(out),
                '_' | '^' => {
                    self.pos += 1;
                    self.skip_script();
                }
                c if c.is_ascii_alphabetic() => {
                    let word = self.word();
                    if is_bare_symbol(&word) {
                        out.insert(word);
                    }
                }
                _ => self.pos += 1,
            }
        }
    }

    fn word(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        self.chars[start..self.pos]
            .iter()
            .map(|&(_, c)| c)
            .collect()
    }

    fn command(&mut self, out: &mut BTreeSet<String>) {
        self.pos += 1; // backslash
        let name: String = {
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                self.pos += 1;
            }
            self.chars[start..self.pos]
                .iter()
                .map(|&(_, c)| c)
                .collect()
        };
        if name.is_empty() {
            // Escaped character such as `\{`, `\$`, `\\`.
            self.pos += 1;
            return;
        }
        if TEXT_COMMANDS.contains(&name.as_str()) {
            self.skip_ws();
            if let Some(body) = self.group() {
                for word in body
                    .split(|c: char| !c.is_ascii_alphanumeric())
                    .filter(|w| !w.is_empty())
                {
                    if is_camel_identifier(word) {
                        out.insert(word.to_string());
                    }
                }
            }
        } else if ALPHABET_COMMANDS.contains(&name.as_str()) {
            self.skip_ws();
            if self.group().is_none() {
                // `\mathbb E` form: single token argument.
                self.pos += 1;
            }
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    /// Consumes a balanced `{...}` group and returns its interior. Returns
    /// `None` without consuming when the next char is not `{`; an
    /// unbalanced group consumes to the end of input.
    fn group(&mut self) -> Option<String> {
        if self.peek() != Some('{') {
            return None;
        }
        let open_at = self.offset();
        self.pos += 1;
        let start = self.offset();
        let mut depth = 1usize;
        while let Some(c) = self.peek() {
            match c {
                '\\' => {
                    self.pos += 2;
                    continue;
                }
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        let end = self.offset();
                        self.pos += 1;
                        return Some(self.src[start..end].to_string());
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        log::debug!("unbalanced group at offset {open_at} skipped");
        self.pos = self.chars.len();
        Some(String::new())
    }

    fn skip_script(&mut self) {
        self.skip_ws();
        match self.peek() {
            Some('{') => {
                self.group();
            }
            Some('\\') => {
                self.pos += 1;
                while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                    self.pos += 1;
                }
            }
            Some(_) => self.pos += 1,
            None => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn wireless_reward_formula() {
        let f = r"R_t = \text{B} \cdot \log_2 \left( 1 + \frac{\text{TransmissionPower} \cdot \text{ChannelGain}[t]}{\text{NoiseDensity} \cdot \text{Bandwidth}} \right)";
        assert_eq!(
            extract_latex_symbols(f),
            set(&[
                "B",
                "Bandwidth",
                "ChannelGain",
                "NoiseDensity",
                "TransmissionPower"
            ])
        );
    }

    #[test]
    fn plain_math_has_no_symbols() {
        assert!(extract_latex_symbols("$x$").is_empty());
        assert!(extract_latex_symbols(r"J(\pi) = \mathbb{E}[\sum_{t=0}^{T} R_t]").is_empty());
    }

    #[test]
    fn subscripted_text_symbol() {
        assert_eq!(
            extract_latex_symbols(r"\text{StockLevel}_i(t)"),
            set(&["StockLevel"])
        );
    }

    #[test]
    fn lowercase_text_and_scripts_are_ignored() {
        let f = r"1, & \text{if } |\text{PoleAngle}_t| \leq \theta_{\text{max}} \ \text{and } x_{\text{Foo}}";
        assert_eq!(extract_latex_symbols(f), set(&["PoleAngle"]));
    }

    #[test]
    fn bare_camel_case_tokens() {
        assert_eq!(
            extract_latex_symbols(r"\min(Demand_i, StockLevel) + SNR + A_t"),
            set(&["Demand", "StockLevel"])
        );
    }

    #[test]
    fn unbalanced_group_does_not_panic() {
        assert_eq!(
            extract_latex_symbols(r"\text{Bandwidth} + \text{Oops"),
            set(&["Bandwidth"])
        );
        let _ = extract_latex_symbols(r"\frac{\text{A}{");
        let _ = extract_latex_symbols("\\");
        let _ = extract_latex_symbols("x_");
    }

    #[test]
    fn alphabet_commands_are_skipped() {
        assert!(extract_latex_symbols(r"\mathbb{I}(x > 0) \mathcal{S} \mathbb E").is_empty());
    }

    #[test]
    fn identifier_rule() {
        assert!(is_camel_identifier("Bandwidth"));
        assert!(is_camel_identifier("B"));
        assert!(is_camel_identifier("UserDistances4"));
        assert!(!is_camel_identifier("bandwidth"));
        assert!(!is_camel_identifier("Channel_Gain"));
        assert!(!is_camel_identifier(""));
    }
}
