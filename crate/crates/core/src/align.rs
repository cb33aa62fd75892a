//! Teacher-student alignment: a frozen text classifier (the teacher)
//! provides target representations, and an audio model (the student) learns
//! to reproduce them while classifying through the teacher's own head.

use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::{
    fingerprint, head_bytes, mse_loss, train_classifier, train_model_with, Checkpoint, DevSet, EpochLog, Loss, Mlp,
    MlpSpec, TrainConfig, TrainOptions, TrainSet,
};

pub const ROLE_KEY: &str = "role";
pub const TEACHER_FINGERPRINT_KEY: &str = "teacher_fingerprint";

/// A trained text classifier, frozen and fingerprinted.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBundle {
    pub checkpoint: Checkpoint,
    pub fingerprint: String,
}

impl TeacherBundle {
    pub fn new(mut checkpoint: Checkpoint) -> Self {
        let fp = checkpoint.fingerprint();
        checkpoint.extra.insert(ROLE_KEY.into(), "teacher".into());
        checkpoint.extra.insert(TEACHER_FINGERPRINT_KEY.into(), fp.clone());
        Self {
            checkpoint,
            fingerprint: fp,
        }
    }

    pub fn model(&self) -> &Mlp {
        &self.checkpoint.model
    }

    pub fn rep_dim(&self) -> usize {
        self.model().spec().rep_dim()
    }

    /// Fails if the weights no longer hash to the stored fingerprint.
    pub fn verify(&self) -> Result<()> {
        let now = fingerprint(self.model());
        if now != self.fingerprint {
            return Err(Error::Checkpoint(format!(
                "teacher fingerprint drifted: stored {}, now {now}",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let stored = ck.extra.get(TEACHER_FINGERPRINT_KEY).cloned();
        let bundle = Self::new(ck);
        if let Some(stored) = stored {
            if stored != bundle.fingerprint {
                return Err(Error::Checkpoint(format!(
                    "teacher fingerprint {stored} does not match its weights ({})",
                    bundle.fingerprint
                )));
            }
        }
        Ok(bundle)
    }
}

pub fn fit_teacher(train: &TrainSet, dev: &DevSet, spec: &MlpSpec, config: &TrainConfig) -> Result<TeacherBundle> {
    if spec.n_classes != 2 {
        return Err(Error::Config("a teacher needs a two-logit head".into()));
    }
    Ok(TeacherBundle::new(train_classifier(train, dev, spec, config)?))
}

/// Eval-mode teacher representations for `utterances`, in that order.
pub fn extract_teacher_reps(teacher: &TeacherBundle, text: &FeatureMatrix, utterances: &[Utterance]) -> Result<FeatureMatrix> {
    let x = text.gather(utterances, "text features")?;
    let rep = teacher.model().forward(&x)?.rep;
    FeatureMatrix::new(utterances.iter().map(|u| u.key()).collect(), rep)
}

/// Eval-mode MSE between student and teacher representations.
pub fn alignment_mse(student: &Mlp, teacher_reps: &Array2<f64>, audio: &Array2<f64>) -> Result<f64> {
    mse_loss(&student.forward(audio)?.rep, teacher_reps)
}

/// Audio training rows paired with the teacher's representation of the
/// same utterances' text.
#[derive(Debug, Clone, Copy)]
pub struct AlignedSet<'a> {
    pub audio: &'a Array2<f64>,
    pub labels: &'a [u8],
    pub teacher_reps: &'a Array2<f64>,
}

pub fn train_aligned_student(
    train: &AlignedSet,
    dev: &DevSet,
    teacher: &TeacherBundle,
    spec: &MlpSpec,
    config: &TrainConfig,
) -> Result<Checkpoint> {
    train_aligned_student_with(train, dev, teacher, spec, config, |_, _| {})
}

/// Trains the student with loss `lambda * align + (1 - lambda) * ce`, the
/// head copied from the teacher and held fixed.
pub fn train_aligned_student_with<F>(
    train: &AlignedSet,
    dev: &DevSet,
    teacher: &TeacherBundle,
    spec: &MlpSpec,
    config: &TrainConfig,
    on_epoch: F,
) -> Result<Checkpoint>
where
    F: FnMut(&EpochLog, &Mlp),
{
    teacher.verify()?;
    if spec.rep_dim() != teacher.rep_dim() {
        return Err(Error::Config(format!(
            "student rep_dim {} differs from teacher rep_dim {}",
            spec.rep_dim(),
            teacher.rep_dim()
        )));
    }
    if spec.n_classes != teacher.model().spec().n_classes {
        return Err(Error::Config("student and teacher heads differ in width".into()));
    }
    let mut student = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    student.set_head(teacher.model().head().clone())?;
    let set = TrainSet::new(train.audio, train.labels).with_targets(train.teacher_reps);
    let opts = TrainOptions {
        loss: Loss::Composite { lambda: config.lambda },
        freeze_head: true,
    };
    let mut ck = train_model_with(student, &set, dev, config, opts, on_epoch)?;

    teacher.verify()?;
    if head_bytes(&ck.model) != head_bytes(teacher.model()) {
        return Err(Error::Checkpoint("student head no longer matches the teacher head".into()));
    }
    ck.extra.insert(ROLE_KEY.into(), "student".into());
    ck.extra.insert(TEACHER_FINGERPRINT_KEY.into(), teacher.fingerprint.clone());
    Ok(ck)
}
