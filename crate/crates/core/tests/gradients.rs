// SPDX-License-Identifier: Apache-2.0

//! Central finite-difference checks of every analytic gradient.

mod common;

use common::gradcheck;
use common::FD_REL_TOL;
use gslab_core::numerics::Mode;

fn check(what: &str, worst: f64, tol: f64) {
    assert!(worst < tol, "{what}: worst relative error {worst:e}");
}

#[test]
fn conv_forward_matches_direct_reference() {
    check("conv forward", gradcheck::conv_forward_vs_direct(), 1e-13);
}

#[test]
fn conv_gradients() {
    check("conv", gradcheck::conv(), FD_REL_TOL);
}

#[test]
fn batchnorm_gradients_train_and_eval() {
    check("batchnorm train", gradcheck::batchnorm(Mode::Train), FD_REL_TOL);
    check("batchnorm eval", gradcheck::batchnorm(Mode::Eval), FD_REL_TOL);
}

#[test]
fn linear_relu_pool_gradients() {
    check("linear", gradcheck::linear(), FD_REL_TOL);
    check("relu", gradcheck::relu(), FD_REL_TOL);
    check("global pool", gradcheck::global_pool(), FD_REL_TOL);
}

#[test]
fn cross_entropy_gradient() {
    check("cross entropy", gradcheck::cross_entropy_loss(), 1e-6);
}

#[test]
fn triplet_gradient() {
    check("triplet", gradcheck::triplet(), 1e-5);
}

#[test]
fn info_nce_gradient() {
    check("info_nce", gradcheck::info_nce_loss(), 1e-5);
}

#[test]
fn micro_resnet_classifier_gradients() {
    check("classifier network", gradcheck::network_classifier().0, FD_REL_TOL);
}

#[test]
fn micro_resnet_simclr_head_gradients() {
    check("simclr network", gradcheck::network_simclr().0, FD_REL_TOL);
}

#[test]
fn micro_resnet_triplet_head_gradients() {
    check("triplet network", gradcheck::network_triplet_head().0, FD_REL_TOL);
}
