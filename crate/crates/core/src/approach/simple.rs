use std::time::Instant;

use super::{
    answered_outcome, check_kind, extract_answer, failure_outcome, Approach, ApproachError, ApproachKind,
    ApproachVariant, EventKind, Outcome, RunContext, Trajectory,
};
use crate::gateway::{FailureKind, GenerationParams};
use crate::task::{assemble_context, build_prompt};

/// A single generation over engineered or minimal context.
pub struct SimpleApproach {
    kind: ApproachKind,
}

impl SimpleApproach {
    /// # Panics
    /// If `kind` is an agent kind.
    pub fn new(kind: ApproachKind) -> Self {
        assert!(!kind.is_agent(), "{kind} is not a single-turn approach");
        Self { kind }
    }
}

impl Approach for SimpleApproach {
    fn kind(&self) -> ApproachKind {
        self.kind
    }

    fn run(&self, variant: &ApproachVariant, ctx: RunContext<'_>) -> Result<(Outcome, Trajectory), ApproachError> {
        check_kind(self, variant)?;
        let started = Instant::now();
        let bundle = assemble_context(ctx.task, ctx.sample, variant.kind.family());
        let prompt = build_prompt(ctx.task, &bundle, variant);
        let mut trajectory = Trajectory::default();
        trajectory.push(EventKind::Prompt, prompt.render());

        let params = GenerationParams {
            max_output_tokens: variant.max_output_tokens(),
            seed: Some(ctx.seed),
            ..GenerationParams::default()
        };
        let mut outcome = match ctx.gateway.generate(&prompt.to_messages(), &params) {
            Err(e) => {
                let kind = e.failure_kind();
                trajectory.push(EventKind::Failure, format!("{kind}: {e}"));
                failure_outcome(kind, e.to_string())
            }
            Ok(turn) => {
                trajectory.push(EventKind::Generation, turn.text.clone()).usage = Some(turn.usage);
                let mut outcome = match extract_answer(&turn.text, ctx.task, variant) {
                    Some(label) => {
                        trajectory.push(EventKind::FinalAnswer, label.clone());
                        answered_outcome(label)
                    }
                    None => {
                        let kind = FailureKind::InvalidCategory;
                        trajectory.push(EventKind::Failure, format!("{kind}: no allowed answer in reply"));
                        failure_outcome(kind, "no allowed answer in reply")
                    }
                };
                outcome.usage_total = turn.usage;
                outcome
            }
        };
        outcome.wall_time_ms = started.elapsed().as_millis() as u64;
        Ok((outcome, trajectory))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, MockBackend, MockScript, RetryPolicy, ScriptTurn};
    use crate::task::{ContextRecipe, ContextSource, Focus, RepoSpec, Sample, Task, Unit};
    use std::collections::BTreeMap;

    fn levin() -> (Task, Sample) {
        let task = Task {
            id: "levin".into(),
            unit: Unit::Commit,
            question: "Intent?".into(),
            categories: vec!["corrective".into(), "adaptive".into(), "perfective".into()],
            allow_unclear: true,
            guidelines: String::new(),
            recipe: ContextRecipe {
                simple: vec![ContextSource::CommitMessage],
                agent: vec![],
            },
        };
        let mut artifacts = BTreeMap::new();
        artifacts.insert(ContextSource::CommitMessage, "Refactor tokenizer".repeat(50));
        let sample = Sample {
            id: "c1".into(),
            task_id: "levin".into(),
            repo: RepoSpec {
                name: "o/r".into(),
                fixture: "x".into(),
                revision: None,
            },
            aux_files: BTreeMap::new(),
            artifacts,
            focus: Focus::Commit { commit: "abc".into() },
            ground_truth: "perfective".into(),
            repo_size_mb: 1.0,
        };
        (task, sample)
    }

    fn run(kind: ApproachKind, script: MockScript) -> (Outcome, Trajectory) {
        let (task, sample) = levin();
        let gateway = Gateway::with_retry(Box::new(MockBackend::new(script)), RetryPolicy::immediate(3));
        let ctx = RunContext {
            task: &task,
            sample: &sample,
            gateway: &gateway,
            shell: None,
            seed: 1,
            cache_grid: None,
        };
        SimpleApproach::new(kind)
            .run(&ApproachVariant::new(kind, "m"), ctx)
            .unwrap()
    }

    #[test]
    fn cot_reply_is_extracted() {
        let (o, t) = run(
            ApproachKind::SimpleCot,
            MockScript::new(vec![ScriptTurn::text("reasoning...\nanswer: perfective")]),
        );
        assert_eq!(o.predicted.as_deref(), Some("perfective"));
        assert_eq!(o.failure, None);
        assert_eq!(o.steps_used, 0);
        assert_eq!(Some(o.usage_total), t.events[1].usage);
        t.validate().unwrap();
    }

    #[test]
    fn overflow_is_a_failure() {
        let mut script = MockScript::new(vec![ScriptTurn::text("ANSWER: perfective")]);
        script.context_window = Some(50);
        let (o, t) = run(ApproachKind::SimpleCot, script);
        assert_eq!(o.failure, Some(FailureKind::ContextOverflow));
        assert!(o.predicted.is_none());
        t.validate().unwrap();
    }

    #[test]
    fn memorization_may_not_answer_unclear() {
        let (o, _) = run(
            ApproachKind::SimpleMemorization,
            MockScript::new(vec![ScriptTurn::text("ANSWER: unclear")]),
        );
        assert_eq!(o.failure, Some(FailureKind::InvalidCategory));
    }

    #[test]
    fn agent_variant_is_rejected() {
        let (task, sample) = levin();
        let gateway = Gateway::new(Box::new(MockBackend::new(MockScript::default())));
        let ctx = RunContext {
            task: &task,
            sample: &sample,
            gateway: &gateway,
            shell: None,
            seed: 1,
            cache_grid: None,
        };
        let v = ApproachVariant::new(ApproachKind::AgentNative, "m");
        assert!(SimpleApproach::new(ApproachKind::SimpleCot).run(&v, ctx).is_err());
    }
}
