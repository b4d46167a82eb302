from setuptools import setup

# command for a user install:
# pip install --user .
# -or- with the test extra:
# pip install -e .[test]

if __name__ == "__main__":
    setup()
