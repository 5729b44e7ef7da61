"""anopipe: train an image anomaly detector without real anomaly photos.

The pipeline renders flat synthetic images of a lever-valve scene, translates
them into a textured target domain with a geometry-consistency GAN, trains a
binary detector on the translated anomalies, and explains detections with
Grad-CAM saliency maps.
"""

__version__ = "0.1.0"
