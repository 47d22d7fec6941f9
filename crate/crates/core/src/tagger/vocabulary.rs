use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ConceptId;
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/vocabulary.json");
const PLACEHOLDER: &str = "{}";

/// One facet of style: a caption template and mutually exclusive
/// descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub caption_template: String,
    pub descriptors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyFile {
    prompt_templates: Vec<String>,
    aspects: Vec<Aspect>,
}

/// A validated concept vocabulary. Concept ids enumerate descriptors
/// aspect-major, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    prompt_templates: Vec<String>,
    aspects: Vec<Aspect>,
    offsets: Vec<usize>,
}

/// A single concept resolved against its aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Concept<'a> {
    pub id: ConceptId,
    pub aspect: &'a Aspect,
    pub descriptor: &'a str,
}

impl Concept<'_> {
    /// The descriptor rendered into its aspect's caption template,
    /// e.g. "realism style".
    pub fn caption(&self) -> String {
        self.aspect.caption_template.replacen(PLACEHOLDER, self.descriptor, 1)
    }
}

fn placeholder_count(s: &str) -> usize {
    s.matches(PLACEHOLDER).count()
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(file: VocabularyFile) -> Result<Self> {
        if file.prompt_templates.is_empty() {
            return Err(Error::Validation("vocabulary has no prompt templates".into()));
        }
        for t in &file.prompt_templates {
            if placeholder_count(t) != 1 {
                return Err(Error::Validation(format!(
                    "prompt template {t:?} must contain exactly one \"{{}}\""
                )));
            }
        }
        let mut names = HashSet::new();
        let mut offsets = Vec::with_capacity(file.aspects.len() + 1);
        let mut total = 0usize;
        for aspect in &file.aspects {
            if !names.insert(aspect.name.as_str()) {
                return Err(Error::Validation(format!("duplicate aspect {:?}", aspect.name)));
            }
            if placeholder_count(&aspect.caption_template) != 1 {
                return Err(Error::Validation(format!(
                    "aspect {:?}: caption template {:?} must contain exactly one \"{{}}\"",
                    aspect.name, aspect.caption_template
                )));
            }
            if aspect.descriptors.len() < 2 {
                return Err(Error::Validation(format!(
                    "aspect {:?} needs at least 2 descriptors, has {}",
                    aspect.name,
                    aspect.descriptors.len()
                )));
            }
            let mut seen = HashSet::new();
            for d in &aspect.descriptors {
                if !seen.insert(d.as_str()) {
                    return Err(Error::Validation(format!(
                        "aspect {:?}: duplicate descriptor {d:?}",
                        aspect.name
                    )));
                }
            }
            offsets.push(total);
            total += aspect.descriptors.len();
        }
        offsets.push(total);
        if ConceptId::try_from(total).is_err() {
            return Err(Error::Validation(format!("{total} concepts is too many")));
        }
        Ok(Vocabulary {
            prompt_templates: file.prompt_templates,
            aspects: file.aspects,
            offsets,
        })
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            prompt_templates: v.prompt_templates,
            aspects: v.aspects,
        }
    }
}

impl Vocabulary {
    pub fn new(prompt_templates: Vec<String>, aspects: Vec<Aspect>) -> Result<Self> {
        VocabularyFile {
            prompt_templates,
            aspects,
        }
        .try_into()
    }

    /// The 16-aspect vocabulary shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled vocabulary is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VocabularyFile = serde_json::from_str(text)?;
        Self::try_from(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn prompt_templates(&self) -> &[String] {
        &self.prompt_templates
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }

    pub fn concept_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Concept-id range covered by aspect `a`.
    pub fn aspect_range(&self, a: usize) -> Range<usize> {
        self.offsets[a]..self.offsets[a + 1]
    }

    pub fn aspect_ranges(&self) -> impl Iterator<Item = (&Aspect, Range<usize>)> + '_ {
        self.aspects
            .iter()
            .enumerate()
            .map(move |(a, aspect)| (aspect, self.aspect_range(a)))
    }

    pub fn concept(&self, id: ConceptId) -> Option<Concept<'_>> {
        let id_usize = id as usize;
        if id_usize >= self.concept_count() {
            return None;
        }
        let a = self.offsets.partition_point(|&o| o <= id_usize) - 1;
        let aspect = &self.aspects[a];
        Some(Concept {
            id,
            aspect,
            descriptor: &aspect.descriptors[id_usize - self.offsets[a]],
        })
    }

    /// Short human-readable label, e.g. "Style: realism".
    pub fn label(&self, id: ConceptId) -> String {
        match self.concept(id) {
            Some(c) => format!("{}: {}", c.aspect.name, c.descriptor),
            None => format!("concept #{id}"),
        }
    }

    /// Every prompt used to embed a concept: each template applied to the
    /// concept's caption.
    pub fn prompts(&self, id: ConceptId) -> Vec<String> {
        let Some(concept) = self.concept(id) else {
            return Vec::new();
        };
        let caption = concept.caption();
        self.prompt_templates
            .iter()
            .map(|t| t.replacen(PLACEHOLDER, &caption, 1))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn json(aspects: &str) -> String {
        format!(r#"{{"prompt_templates": ["art with {{}}"], "aspects": [{aspects}]}}"#)
    }

    #[test]
    fn bundled_vocabulary_has_sixteen_aspects() {
        let v = Vocabulary::bundled();
        assert_eq!(v.aspects().len(), 16);
        assert_eq!(v.concept_count(), 191);
        assert_eq!(v.prompt_templates().len(), 9);
        assert_eq!(v.label(0), "Style: realism");
        assert_eq!(v.concept(0).unwrap().caption(), "realism style");
        let last = (v.concept_count() - 1) as ConceptId;
        assert_eq!(v.concept(last).unwrap().descriptor, "japanese characters");
        assert!(v.concept(last + 1).is_none());
    }

    #[test]
    fn prompts_render_caption_into_templates() {
        let v = Vocabulary::bundled();
        let prompts = v.prompts(0);
        assert_eq!(prompts.len(), 9);
        assert_eq!(prompts[0], "art with realism style");
        assert!(prompts.contains(&"a cropped image of art with realism style".to_string()));
    }

    #[test]
    fn concept_ids_are_aspect_major() {
        let v = Vocabulary::bundled();
        let mut expected = 0usize;
        for (aspect, range) in v.aspect_ranges() {
            assert_eq!(range.start, expected);
            for (k, id) in range.clone().enumerate() {
                let c = v.concept(id as ConceptId).unwrap();
                assert_eq!(c.aspect.name, aspect.name);
                assert_eq!(c.descriptor, aspect.descriptors[k]);
            }
            expected = range.end;
        }
        assert_eq!(expected, v.concept_count());
    }

    #[test]
    fn single_descriptor_aspect_rejected() {
        let text = json(r#"{"name": "Medium", "caption_template": "{}", "descriptors": ["ink"]}"#);
        assert!(matches!(Vocabulary::from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_aspect_names_rejected() {
        let a = r#"{"name": "Style", "caption_template": "{} style", "descriptors": ["a", "b"]}"#;
        let text = json(&format!("{a}, {a}"));
        assert!(matches!(Vocabulary::from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn duplicate_descriptor_and_bad_template_rejected() {
        let dup = json(r#"{"name": "S", "caption_template": "{}", "descriptors": ["a", "a"]}"#);
        assert!(matches!(Vocabulary::from_json(&dup), Err(Error::Validation(_))));
        let none = json(r#"{"name": "S", "caption_template": "style", "descriptors": ["a", "b"]}"#);
        assert!(matches!(Vocabulary::from_json(&none), Err(Error::Validation(_))));
        let two = json(r#"{"name": "S", "caption_template": "{} {}", "descriptors": ["a", "b"]}"#);
        assert!(matches!(Vocabulary::from_json(&two), Err(Error::Validation(_))));
    }

    #[test]
    fn serde_round_trip_keeps_offsets() {
        let v = Vocabulary::bundled();
        let back: Vocabulary = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(back, v);
    }
}
