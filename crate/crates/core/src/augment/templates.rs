//! The six fixed answer templates used to turn a short answer into a sentence.

const TEMPLATE_FILE: &str = include_str!("../../resources/answer_templates.txt");
const SLOT: &str = "{response}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn fill(&self, response: &str) -> String {
        self.text.replacen(SLOT, response, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    /// The shipped templates, one per line of `resources/answer_templates.txt`.
    pub fn builtin() -> Self {
        Self::parse(TEMPLATE_FILE).expect("shipped template file is valid")
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let templates: Vec<Template> = text.lines().map(|l| Template { text: l.to_string() }).collect();
        if templates.len() != 6 {
            return Err(format!("expected 6 templates, found {}", templates.len()));
        }
        if let Some(t) = templates.iter().find(|t| t.text.matches(SLOT).count() != 1) {
            return Err(format!("template {:?} must contain {SLOT} exactly once", t.text));
        }
        Ok(Self { templates })
    }

    /// 1-based, matching the numbering of the template list.
    pub fn get(&self, number: usize) -> Option<&Template> {
        number.checked_sub(1).and_then(|i| self.templates.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.iter()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Serializes back to the resource file format.
    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for t in &self.templates {
            out.push_str(&t.text);
            out.push('\n');
        }
        out
    }
}
