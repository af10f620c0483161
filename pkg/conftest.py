import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'addq.settings')
os.environ.setdefault('ADDQ_LOG_LEVEL', 'WARNING')
django.setup()
