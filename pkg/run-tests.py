import os
import sys
import unittest


def run_tests(pattern='test_*.py'):
    # Project root is where this script lives; the suites import processors/ and cli from it
    project_root = os.path.abspath(os.path.dirname(__file__))
    print("Project root:", project_root)
    sys.path.insert(0, project_root)

    tests_dir = os.path.join(project_root, 'tests')
    print("Tests directory:", tests_dir)
    if 'FOREMAN_Y4M' in os.environ:
        print("Foreman sequence:", os.environ['FOREMAN_Y4M'])

    loader = unittest.TestLoader()
    tests = loader.discover(start_dir=tests_dir, pattern=pattern)

    num_tests = tests.countTestCases()
    print("Discovered tests count:", num_tests)

    if num_tests == 0:
        print(f"No tests match '{pattern}'. Check the tests directory and that test cases inherit from unittest.TestCase.")

    test_runner = unittest.TextTestRunner(verbosity=2)
    result = test_runner.run(tests)

    for test, reason in result.skipped:
        print(f"Skipped {test.id()}: {reason}")

    sys.exit(not result.wasSuccessful())


if __name__ == '__main__':
    # Optional argument narrows discovery, e.g. "test_metric*.py"
    run_tests(*sys.argv[1:2])
