//! Prompt templates with per-stage placeholder contracts.

use serde::{Deserialize, Serialize};

use crate::provider::{PromptInputs, StageTag};

use super::PipelineError;

pub const PLACEHOLDER_NAMES: [&str; 4] = ["q_raw", "q_enhanced", "rag_content", "reasoning_w"];

/// Placeholders each generation stage's user template must reference.
pub fn required_placeholders(stage: StageTag) -> &'static [&'static str] {
    match stage {
        StageTag::Enhance => &["q_raw"],
        StageTag::Reject => &["q_enhanced"],
        StageTag::Cot => &["q_enhanced", "rag_content"],
        StageTag::Answer => &["q_raw", "rag_content", "reasoning_w"],
        StageTag::Judge => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub system: String,
    pub user: String,
}

fn token(name: &str) -> String {
    format!("{{{name}}}")
}

fn substitute(text: &str, inputs: &PromptInputs) -> String {
    let bindings = [
        ("q_raw", inputs.q_raw.as_str()),
        ("q_enhanced", inputs.q_enhanced.as_str()),
        ("rag_content", inputs.rag_content.as_str()),
        ("reasoning_w", inputs.reasoning_w.as_str()),
    ];
    let mut out = text.to_string();
    for (name, value) in bindings {
        out = out.replace(&token(name), value);
    }
    out
}

impl PromptTemplate {
    /// Checks that the template references every placeholder its stage needs.
    pub fn validate_for(&self, stage: StageTag) -> Result<(), PipelineError> {
        for name in required_placeholders(stage) {
            if !self.user.contains(&token(name)) {
                return Err(PipelineError::Template(format!(
                    "template {:?} for stage {stage} is missing placeholder {}",
                    self.name,
                    token(name)
                )));
            }
        }
        Ok(())
    }

    /// Renders `(system, user)` prompts. Rendering all placeholders must
    /// leave no residual placeholder tokens, unless the bound value itself
    /// introduced one.
    pub fn render(&self, inputs: &PromptInputs) -> (String, String) {
        (substitute(&self.system, inputs), substitute(&self.user, inputs))
    }
}

/// The four generation-stage templates used by one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub enhance: PromptTemplate,
    pub reject: PromptTemplate,
    pub cot: PromptTemplate,
    pub answer: PromptTemplate,
}

const DEFAULT_TEMPLATES: &str = include_str!("../../assets/templates.toml");

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TEMPLATES).expect("built-in templates parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let mut set: TemplateSet =
            toml::from_str(text).map_err(|err| PipelineError::Template(err.to_string()))?;
        for (template, stage) in [
            (&mut set.enhance, StageTag::Enhance),
            (&mut set.reject, StageTag::Reject),
            (&mut set.cot, StageTag::Cot),
            (&mut set.answer, StageTag::Answer),
        ] {
            if template.name.is_empty() {
                template.name = stage.name().to_string();
            }
            template.validate_for(stage)?;
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|err| {
            PipelineError::Template(format!("{}: {err}", path.as_ref().display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn for_stage(&self, stage: StageTag) -> Option<&PromptTemplate> {
        match stage {
            StageTag::Enhance => Some(&self.enhance),
            StageTag::Reject => Some(&self.reject),
            StageTag::Cot => Some(&self.cot),
            StageTag::Answer => Some(&self.answer),
            StageTag::Judge => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> PromptInputs {
        PromptInputs {
            q_raw: "RAW".into(),
            q_enhanced: "ENH".into(),
            rag_content: "KNOWLEDGE".into(),
            reasoning_w: "STEPS".into(),
        }
    }

    #[test]
    fn builtin_templates_cover_required_placeholders() {
        let set = TemplateSet::builtin();
        for stage in [StageTag::Enhance, StageTag::Reject, StageTag::Cot, StageTag::Answer] {
            set.for_stage(stage).unwrap().validate_for(stage).unwrap();
        }
    }

    #[test]
    fn render_substitutes_every_known_placeholder() {
        let set = TemplateSet::builtin();
        for stage in [StageTag::Enhance, StageTag::Reject, StageTag::Cot, StageTag::Answer] {
            let (system, user) = set.for_stage(stage).unwrap().render(&inputs());
            for name in PLACEHOLDER_NAMES {
                let tok = token(name);
                assert!(!system.contains(&tok), "{stage}: residual {tok} in system");
                assert!(!user.contains(&tok), "{stage}: residual {tok} in user");
            }
        }
    }

    #[test]
    fn missing_required_placeholder_is_rejected() {
        let template = PromptTemplate {
            name: "bad".into(),
            system: String::new(),
            user: "no placeholders at all".into(),
        };
        assert!(template.validate_for(StageTag::Enhance).is_err());
    }

    #[test]
    fn unrelated_braces_pass_through() {
        let template = PromptTemplate {
            name: "braces".into(),
            system: String::new(),
            user: "reply as {\"k\": 1} for {q_raw}".into(),
        };
        let (_, user) = template.render(&inputs());
        assert_eq!(user, "reply as {\"k\": 1} for RAW");
    }
}
