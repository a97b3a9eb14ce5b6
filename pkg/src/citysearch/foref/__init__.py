from .net import ForefModel, angular_deviation, loss
from .render import CTX, EGO, EGO_CTX, VARIANTS, ContextImage, render_context, rotate_map
from .train import (Annotation, ForefSample, TrainConfig, evaluate_crossval, predict_for,
                    synth_annotate, train, train_on_cities)
