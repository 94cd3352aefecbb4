"""Episodic policy search in the joint latent space and in pose space."""
