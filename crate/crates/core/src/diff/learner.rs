use super::{Adam, DiffError, Mlp, Tensor, TensorArchive};

/// A network together with its optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub net: Mlp,
    pub opt: Adam,
}

impl Learner {
    pub fn new(net: Mlp, lr: f64, weight_decay: f64) -> Self {
        let opt = Adam::new(net.params(), lr).with_weight_decay(weight_decay);
        Learner { net, opt }
    }

    pub fn step(&mut self, grads: &[Tensor]) -> Result<(), DiffError> {
        self.opt.step(self.net.params_mut(), grads)
    }

    pub fn save(&self, archive: &mut TensorArchive, prefix: &str) {
        archive.insert_all(&format!("{prefix}.params"), self.net.params());
        let (m, v) = self.opt.moments();
        archive.insert_all(&format!("{prefix}.adam_m"), m);
        archive.insert_all(&format!("{prefix}.adam_v"), v);
        archive.insert(
            format!("{prefix}.adam_t"),
            Tensor::scalar(self.opt.steps() as f64),
        );
    }

    pub fn load(&mut self, archive: &TensorArchive, prefix: &str) -> Result<(), DiffError> {
        self.net.set_params(archive.get_all(&format!("{prefix}.params")))?;
        let t = archive.get(&format!("{prefix}.adam_t"))?.item() as u64;
        self.opt.restore(
            archive.get_all(&format!("{prefix}.adam_m")),
            archive.get_all(&format!("{prefix}.adam_v")),
            t,
        )
    }
}
