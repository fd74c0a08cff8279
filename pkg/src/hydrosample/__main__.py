from hydrosample.cli import hydrosample

hydrosample()
